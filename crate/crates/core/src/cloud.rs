//! The observed point cloud and its per-point bookkeeping.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::geometry::{Aabb, Point, View};
use crate::index::SpatialHash;

/// Stable handle to a stored point. Ids increase with insertion order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointId(pub u32);

impl PointId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum PointClass {
    Core = 0,
    Frontier = 1,
    Outlier = 2,
}

impl PointClass {
    pub fn label(self) -> u8 {
        self as u8
    }
}

/// Insert-only set of measured points with a minimum spacing of `epsilon`.
///
/// Every point carries a class and the position of the view that captured it.
/// Freshly inserted points are outliers until classified.
#[derive(Clone, Debug)]
pub struct ObservedCloud {
    epsilon: f64,
    positions: Vec<Point>,
    classes: Vec<PointClass>,
    capture_of: Vec<u32>,
    capture_positions: Vec<Point>,
    index: SpatialHash,
    frontiers: BTreeSet<PointId>,
    class_counts: [usize; 3],
}

impl ObservedCloud {
    /// Empty cloud with separation `epsilon`, indexed by a grid of `cell` sized cells.
    pub fn new(epsilon: f64, cell: f64) -> Self {
        Self {
            epsilon,
            positions: Vec::new(),
            classes: Vec::new(),
            capture_of: Vec::new(),
            capture_positions: Vec::new(),
            index: SpatialHash::new(cell),
            frontiers: BTreeSet::new(),
            class_counts: [0; 3],
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn ids(&self) -> impl ExactSizeIterator<Item = PointId> {
        (0..self.positions.len() as u32).map(PointId)
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    #[inline]
    pub fn position(&self, id: PointId) -> Point {
        self.positions[id.index()]
    }

    #[inline]
    pub fn class_of(&self, id: PointId) -> PointClass {
        self.classes[id.index()]
    }

    /// Position of the view that captured `id`.
    #[inline]
    pub fn capture_position(&self, id: PointId) -> Point {
        self.capture_positions[self.capture_of[id.index()] as usize]
    }

    /// Frontier ids, ascending.
    pub fn frontiers(&self) -> &BTreeSet<PointId> {
        &self.frontiers
    }

    pub fn count(&self, class: PointClass) -> usize {
        self.class_counts[class as usize]
    }

    pub fn set_class(&mut self, id: PointId, class: PointClass) {
        let slot = &mut self.classes[id.index()];
        if *slot == class {
            return;
        }
        self.class_counts[*slot as usize] -= 1;
        self.class_counts[class as usize] += 1;
        if *slot == PointClass::Frontier {
            self.frontiers.remove(&id);
        }
        if class == PointClass::Frontier {
            self.frontiers.insert(id);
        }
        *slot = class;
    }

    /// Stored points within the closed ball, ascending by id.
    pub fn neighbors_within(&self, p: &Point, radius: f64) -> Vec<PointId> {
        self.index
            .within(p, radius)
            .into_iter()
            .map(PointId)
            .collect()
    }

    pub fn any_within(&self, p: &Point, radius: f64) -> bool {
        self.index.any_within(p, radius)
    }

    /// Visits stored points within the closed ball in unspecified order; see
    /// [`SpatialHash::visit_within`].
    pub fn visit_within<F>(&self, p: &Point, radius: f64, mut f: F) -> bool
    where
        F: FnMut(PointId, f64) -> bool,
    {
        self.index.visit_within(p, radius, |i, d2| f(PointId(i), d2))
    }

    /// The `k` closest stored points, nearest first; equal distances keep insertion order.
    pub fn k_nearest(&self, p: &Point, k: usize) -> Vec<PointId> {
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        let bounds = Aabb::from_points(&self.positions);
        let reach = (bounds.center() - p).norm() + bounds.extent().norm();
        let mut radius = self.index.cell_size();
        loop {
            let mut found: Vec<(f64, u32)> = Vec::new();
            self.index.visit_within(p, radius, |i, d2| {
                found.push((d2, i));
                true
            });
            if found.len() >= k || radius >= reach {
                found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                return found.into_iter().take(k).map(|(_, i)| PointId(i)).collect();
            }
            radius *= 2.0;
        }
    }

    /// Inserts, in input order, each point with no stored point within `epsilon`.
    /// Accepted points start as outliers and remember `capture`.
    pub fn insert_filtered(&mut self, points: &[Point], capture: &View) -> Vec<PointId> {
        let capture_idx = self.capture_positions.len() as u32;
        let mut accepted = Vec::new();
        for p in points {
            if !p.coords.iter().all(|c| c.is_finite()) || self.index.any_within(p, self.epsilon) {
                continue;
            }
            let id = PointId(self.positions.len() as u32);
            self.index.insert(id.0, p);
            self.positions.push(*p);
            self.classes.push(PointClass::Outlier);
            self.capture_of.push(capture_idx);
            self.class_counts[PointClass::Outlier as usize] += 1;
            accepted.push(id);
        }
        if !accepted.is_empty() {
            self.capture_positions.push(capture.position);
        }
        accepted
    }

    /// Copy holding only the points inside `bounds`, with classes and capture
    /// positions preserved. Ids are renumbered in original order.
    pub fn crop_to_bounds(&self, bounds: &Aabb) -> ObservedCloud {
        let mut out = ObservedCloud::new(self.epsilon, self.index.cell_size());
        out.capture_positions = self.capture_positions.clone();
        for id in self.ids() {
            let p = self.position(id);
            if !bounds.contains(&p) {
                continue;
            }
            let nid = PointId(out.positions.len() as u32);
            out.index.insert(nid.0, &p);
            out.positions.push(p);
            out.classes.push(PointClass::Outlier);
            out.capture_of.push(self.capture_of[id.index()]);
            out.class_counts[PointClass::Outlier as usize] += 1;
            out.set_class(nid, self.class_of(id));
        }
        out
    }

    /// ASCII PLY with a class label and the capturing view position per vertex.
    pub fn write_ply<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "ply")?;
        writeln!(w, "format ascii 1.0")?;
        writeln!(w, "element vertex {}", self.len())?;
        for name in ["x", "y", "z"] {
            writeln!(w, "property float {name}")?;
        }
        writeln!(w, "property uchar class")?;
        for name in ["view_x", "view_y", "view_z"] {
            writeln!(w, "property float {name}")?;
        }
        writeln!(w, "end_header")?;
        for id in self.ids() {
            let p = self.position(id);
            let v = self.capture_position(id);
            writeln!(
                w,
                "{} {} {} {} {} {} {}",
                p.x as f32,
                p.y as f32,
                p.z as f32,
                self.class_of(id).label(),
                v.x as f32,
                v.y as f32,
                v.z as f32
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_ply(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_ply(std::io::BufWriter::new(f))
    }
}
