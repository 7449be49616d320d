//! Triangle meshes used as simulated scenes.

use std::io::Write;
use std::path::Path;

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct SceneMesh {
    vertices: Vec<Point>,
    triangles: Vec<[u32; 3]>,
    bounds: Aabb,
}

impl SceneMesh {
    /// Validates indices and drops zero-area triangles. Fails if none remain.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let invalid = |reason: String| Error::MeshLoad {
            path: "<memory>".into(),
            reason,
        };
        if let Some(v) = vertices.iter().find(|v| !v.coords.iter().all(|c| c.is_finite())) {
            return Err(invalid(format!("non-finite vertex {v:?}")));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i as usize >= vertices.len())) {
            return Err(invalid(format!(
                "triangle {t:?} indexes past {} vertices",
                vertices.len()
            )));
        }
        let before = triangles.len();
        let triangles: Vec<[u32; 3]> = triangles
            .into_iter()
            .filter(|t| {
                let [a, b, c] = t.map(|i| vertices[i as usize]);
                (b - a).cross(&(c - a)).norm() > 0.0
            })
            .collect();
        if triangles.len() < before {
            log::warn!("dropped {} degenerate triangles", before - triangles.len());
        }
        if triangles.is_empty() {
            return Err(invalid("no non-degenerate triangles".into()));
        }
        let bounds = Aabb::from_points(&vertices);
        Ok(Self {
            vertices,
            triangles,
            bounds,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn triangle(&self, i: usize) -> [Point; 3] {
        self.triangles[i].map(|v| self.vertices[v as usize])
    }

    /// Uniformly scales to fit `target` extents, centred on the z axis with the base at z = 0.
    pub fn scale_to_box(&mut self, target: Vector) {
        let ext = self.bounds.extent();
        let s = (0..3)
            .filter(|&i| ext[i] > 0.0)
            .map(|i| target[i] / ext[i])
            .fold(f64::INFINITY, f64::min);
        let s = if s.is_finite() { s } else { 1.0 };
        let c = self.bounds.center();
        let base = Vector::new(c.x, c.y, self.bounds.min.z);
        for v in &mut self.vertices {
            *v = Point::from((*v - base) * s);
        }
        self.bounds = Aabb::from_points(&self.vertices);
    }

    pub fn translate(&mut self, offset: Vector) {
        for v in &mut self.vertices {
            *v += offset;
        }
        self.bounds = Aabb::from_points(&self.vertices);
    }

    /// Geodesic sphere: an icosahedron subdivided `subdivisions` times.
    pub fn icosphere(center: Point, radius: f64, subdivisions: u32) -> Self {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Vector> = [
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ]
        .iter()
        .map(|p| Vector::from(*p).normalize())
        .collect();
        let mut faces: Vec<[u32; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut mid: FxHashMap<(u32, u32), u32> = FxHashMap::default();
            let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vector>| -> u32 {
                let key = (a.min(b), a.max(b));
                *mid.entry(key).or_insert_with(|| {
                    verts.push((verts[a as usize] + verts[b as usize]).normalize());
                    (verts.len() - 1) as u32
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for [a, b, c] in faces {
                let ab = midpoint(a, b, &mut verts);
                let bc = midpoint(b, c, &mut verts);
                let ca = midpoint(c, a, &mut verts);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        let vertices = verts.into_iter().map(|v| center + v * radius).collect();
        Self::new(vertices, faces).expect("icosphere is well formed")
    }

    /// Axis-aligned box with 8 vertices and 12 outward-wound triangles.
    pub fn cuboid(bounds: &Aabb) -> Self {
        let (lo, hi) = (bounds.min, bounds.max);
        let vertices = (0..8)
            .map(|i| {
                Point::new(
                    if i & 1 == 0 { lo.x } else { hi.x },
                    if i & 2 == 0 { lo.y } else { hi.y },
                    if i & 4 == 0 { lo.z } else { hi.z },
                )
            })
            .collect();
        let triangles = vec![
            [0, 2, 1],
            [1, 2, 3],
            [4, 5, 6],
            [5, 7, 6],
            [0, 1, 4],
            [1, 5, 4],
            [2, 6, 3],
            [3, 6, 7],
            [0, 4, 2],
            [2, 4, 6],
            [1, 3, 5],
            [3, 7, 5],
        ];
        Self::new(vertices, triangles).expect("box is well formed")
    }

    /// ASCII PLY with vertices and triangles.
    pub fn write_ply<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "ply\nformat ascii 1.0")?;
        writeln!(w, "element vertex {}", self.vertices.len())?;
        writeln!(w, "property double x\nproperty double y\nproperty double z")?;
        writeln!(w, "element face {}", self.triangles.len())?;
        writeln!(w, "property list uchar int vertex_indices\nend_header")?;
        for v in &self.vertices {
            writeln!(w, "{} {} {}", v.x, v.y, v.z)?;
        }
        for t in &self.triangles {
            writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Loads a PLY or OBJ mesh, triangulating polygons as fans.
pub fn load_mesh(path: &Path) -> Result<SceneMesh> {
    let fail = |reason: String| Error::MeshLoad {
        path: path.display().to_string(),
        reason,
    };
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let (vertices, polygons): (Vec<Point>, Vec<Vec<u32>>) = match ext.as_str() {
        "ply" => {
            let file = std::fs::File::open(path).map_err(|e| fail(e.to_string()))?;
            let data = super::ply::read_ply(file).map_err(|e| fail(e.to_string()))?;
            (data.vertices, data.faces)
        }
        "obj" => {
            let opts = tobj::LoadOptions {
                triangulate: true,
                single_index: true,
                ..Default::default()
            };
            let (models, _) = tobj::load_obj(path, &opts).map_err(|e| fail(e.to_string()))?;
            let mut vertices = Vec::new();
            let mut polygons = Vec::new();
            for m in models {
                let base = vertices.len() as u32;
                vertices.extend(
                    m.mesh
                        .positions
                        .chunks_exact(3)
                        .map(|p| Point::new(p[0] as f64, p[1] as f64, p[2] as f64)),
                );
                polygons.extend(m.mesh.indices.chunks_exact(3).map(|t| t.iter().map(|i| base + i).collect()));
            }
            (vertices, polygons)
        }
        other => return Err(fail(format!("unsupported mesh format {other:?}"))),
    };
    let mut triangles = Vec::new();
    for poly in polygons {
        if poly.len() < 3 {
            return Err(fail(format!("face with {} vertices", poly.len())));
        }
        for k in 1..poly.len() - 1 {
            triangles.push([poly[0], poly[k], poly[k + 1]]);
        }
    }
    SceneMesh::new(vertices, triangles).map_err(|e| match e {
        Error::MeshLoad { reason, .. } => fail(reason),
        other => other,
    })
}
