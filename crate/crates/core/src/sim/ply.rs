//! Minimal PLY reader (ASCII and binary) for vertices and polygon faces.

use std::io::{BufRead, BufReader, Read};

use byteorder::{BigEndian, LittleEndian, ReadBytesExt};

use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
    BinaryBe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::Ply(format!("unknown scalar type {other:?}"))),
        })
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar(n, _) | Property::List(n, _, _) => n,
        }
    }
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// Vertex positions and faces from a PLY file.
#[derive(Clone, Debug, Default)]
pub struct PlyData {
    pub vertices: Vec<Point>,
    pub faces: Vec<Vec<u32>>,
}

fn parse_header<R: BufRead>(r: &mut R) -> Result<(Format, Vec<Element>)> {
    let mut line = String::new();
    let next_line = |r: &mut R, line: &mut String| -> Result<()> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(Error::Ply("unexpected end of header".into()));
        }
        Ok(())
    };
    next_line(r, &mut line)?;
    if line.trim_end() != "ply" {
        return Err(Error::Ply("missing 'ply' magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next_line(r, &mut line)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => continue,
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] => continue,
            ["format", f, _version] => {
                format = Some(match *f {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    "binary_big_endian" => Format::BinaryBe,
                    other => return Err(Error::Ply(format!("unknown format {other:?}"))),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::Ply(format!("bad element count {count:?}")))?,
                properties: Vec::new(),
            }),
            ["property", "list", count_ty, item_ty, name] => elements
                .last_mut()
                .ok_or_else(|| Error::Ply("property before element".into()))?
                .properties
                .push(Property::List(
                    name.to_string(),
                    Scalar::parse(count_ty)?,
                    Scalar::parse(item_ty)?,
                )),
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| Error::Ply("property before element".into()))?
                .properties
                .push(Property::Scalar(name.to_string(), Scalar::parse(ty)?)),
            _ => return Err(Error::Ply(format!("unrecognised header line {:?}", line.trim_end()))),
        }
    }
    let format = format.ok_or_else(|| Error::Ply("missing format line".into()))?;
    Ok((format, elements))
}

trait ValueSource {
    fn value(&mut self, ty: Scalar) -> Result<f64>;
}

struct AsciiSource<R> {
    reader: R,
    tokens: std::vec::IntoIter<String>,
}

impl<R: BufRead> ValueSource for AsciiSource<R> {
    fn value(&mut self, _ty: Scalar) -> Result<f64> {
        loop {
            if let Some(t) = self.tokens.next() {
                return t
                    .parse::<f64>()
                    .map_err(|_| Error::Ply(format!("bad number {t:?}")));
            }
            let mut line = String::new();
            if self.reader.read_line(&mut line)? == 0 {
                return Err(Error::Ply("unexpected end of data".into()));
            }
            self.tokens = line
                .split_whitespace()
                .map(str::to_owned)
                .collect::<Vec<_>>()
                .into_iter();
        }
    }
}

struct BinarySource<R, B> {
    reader: R,
    order: std::marker::PhantomData<B>,
}

impl<R: Read, B: byteorder::ByteOrder> ValueSource for BinarySource<R, B> {
    fn value(&mut self, ty: Scalar) -> Result<f64> {
        let r = &mut self.reader;
        let v = match ty {
            Scalar::I8 => r.read_i8()? as f64,
            Scalar::U8 => r.read_u8()? as f64,
            Scalar::I16 => r.read_i16::<B>()? as f64,
            Scalar::U16 => r.read_u16::<B>()? as f64,
            Scalar::I32 => r.read_i32::<B>()? as f64,
            Scalar::U32 => r.read_u32::<B>()? as f64,
            Scalar::F32 => r.read_f32::<B>()? as f64,
            Scalar::F64 => r.read_f64::<B>()?,
        };
        Ok(v)
    }
}

fn read_body(src: &mut dyn ValueSource, elements: &[Element]) -> Result<PlyData> {
    let mut data = PlyData::default();
    for el in elements {
        let xyz = ["x", "y", "z"].map(|n| el.properties.iter().position(|p| p.name() == n));
        let face_list = el
            .properties
            .iter()
            .position(|p| matches!(p, Property::List(n, _, _) if n == "vertex_indices" || n == "vertex_index"));
        if el.name == "vertex" && xyz.iter().any(Option::is_none) {
            return Err(Error::Ply("vertex element lacks x, y or z".into()));
        }
        for _ in 0..el.count {
            let mut coords = [0.0; 3];
            let mut face = Vec::new();
            for (k, prop) in el.properties.iter().enumerate() {
                match prop {
                    Property::Scalar(_, ty) => {
                        let v = src.value(*ty)?;
                        if el.name == "vertex" {
                            if let Some(axis) = xyz.iter().position(|&i| i == Some(k)) {
                                coords[axis] = v;
                            }
                        }
                    }
                    Property::List(_, count_ty, item_ty) => {
                        let n = src.value(*count_ty)?;
                        if !(n >= 0.0 && n.fract() == 0.0) {
                            return Err(Error::Ply(format!("bad list length {n}")));
                        }
                        for _ in 0..n as usize {
                            let v = src.value(*item_ty)?;
                            if el.name == "face" && face_list == Some(k) {
                                if !(v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64) {
                                    return Err(Error::Ply(format!("bad vertex index {v}")));
                                }
                                face.push(v as u32);
                            }
                        }
                    }
                }
            }
            if el.name == "vertex" {
                data.vertices.push(Point::new(coords[0], coords[1], coords[2]));
            } else if el.name == "face" && face_list.is_some() {
                data.faces.push(face);
            }
        }
    }
    Ok(data)
}

pub fn read_ply<R: Read>(reader: R) -> Result<PlyData> {
    let mut reader = BufReader::new(reader);
    let (format, elements) = parse_header(&mut reader)?;
    match format {
        Format::Ascii => read_body(
            &mut AsciiSource {
                reader,
                tokens: Vec::new().into_iter(),
            },
            &elements,
        ),
        Format::BinaryLe => read_body(
            &mut BinarySource::<_, LittleEndian> {
                reader,
                order: std::marker::PhantomData,
            },
            &elements,
        ),
        Format::BinaryBe => read_body(
            &mut BinarySource::<_, BigEndian> {
                reader,
                order: std::marker::PhantomData,
            },
            &elements,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use byteorder::WriteBytesExt;

    const ASCII_TRI: &str = "ply\nformat ascii 1.0\ncomment test\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 255\n1 0 0 255\n0 1 0 255\n3 0 1 2\n";

    #[test]
    fn ascii_triangle() {
        let d = read_ply(ASCII_TRI.as_bytes()).unwrap();
        assert_eq!(d.vertices.len(), 3);
        assert_eq!(d.vertices[1], Point::new(1.0, 0.0, 0.0));
        assert_eq!(d.faces, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn binary_big_endian_quad() {
        let mut buf = b"ply\nformat binary_big_endian 1.0\nelement vertex 4\nproperty double x\nproperty double y\nproperty double z\nelement face 1\nproperty list uchar uint vertex_index\nend_header\n".to_vec();
        for p in [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.5]] {
            for c in p {
                buf.write_f64::<BigEndian>(c).unwrap();
            }
        }
        buf.write_u8(4).unwrap();
        for i in 0..4u32 {
            buf.write_u32::<BigEndian>(i).unwrap();
        }
        let d = read_ply(buf.as_slice()).unwrap();
        assert_eq!(d.vertices[3], Point::new(0.0, 1.0, 0.5));
        assert_eq!(d.faces, vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn truncated_body_is_an_error() {
        let cut = &ASCII_TRI[..ASCII_TRI.len() - 8];
        assert!(matches!(read_ply(cut.as_bytes()), Err(Error::Ply(_))));
        assert!(read_ply("plx\n".as_bytes()).is_err());
    }
}
