//! Bounding volume hierarchy for ray casting against a [`SceneMesh`].

use crate::geometry::{Point, Vector};

use super::mesh::SceneMesh;

const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug)]
struct Node {
    min: [f64; 3],
    max: [f64; 3],
    /// First triangle slot for leaves, right child for interior nodes.
    index: u32,
    /// Triangle count for leaves, zero for interior nodes.
    count: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub triangle: u32,
}

#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
    tris: Vec<[Point; 3]>,
}

impl Bvh {
    pub fn build(mesh: &SceneMesh) -> Self {
        let tris: Vec<[Point; 3]> = (0..mesh.triangles().len()).map(|i| mesh.triangle(i)).collect();
        let centroids: Vec<Point> = tris
            .iter()
            .map(|t| Point::from((t[0].coords + t[1].coords + t[2].coords) / 3.0))
            .collect();
        let mut bvh = Self {
            nodes: Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1),
            order: (0..tris.len() as u32).collect(),
            tris,
        };
        bvh.build_node(&centroids, 0, bvh.order.len());
        bvh
    }

    fn build_node(&mut self, centroids: &[Point], lo: usize, hi: usize) -> usize {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        let mut cmin = [f64::INFINITY; 3];
        let mut cmax = [f64::NEG_INFINITY; 3];
        for &t in &self.order[lo..hi] {
            for p in &self.tris[t as usize] {
                for k in 0..3 {
                    min[k] = min[k].min(p[k]);
                    max[k] = max[k].max(p[k]);
                }
            }
            let c = centroids[t as usize];
            for k in 0..3 {
                cmin[k] = cmin[k].min(c[k]);
                cmax[k] = cmax[k].max(c[k]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            min,
            max,
            index: lo as u32,
            count: (hi - lo) as u32,
        });
        let axis = (0..3)
            .max_by(|&a, &b| (cmax[a] - cmin[a]).total_cmp(&(cmax[b] - cmin[b])))
            .unwrap_or(0);
        if hi - lo <= LEAF_SIZE || cmax[axis] <= cmin[axis] {
            return id;
        }
        let mid = (lo + hi) / 2;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            centroids[a as usize][axis]
                .total_cmp(&centroids[b as usize][axis])
                .then(a.cmp(&b))
        });
        self.build_node(centroids, lo, mid);
        let right = self.build_node(centroids, mid, hi);
        self.nodes[id].index = right as u32;
        self.nodes[id].count = 0;
        id
    }

    /// Nearest hit with `t` in `(t_min, t_max]`; ties go to the lower triangle index.
    pub fn intersect(&self, origin: &Point, dir: &Vector, t_min: f64, t_max: f64) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = [1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z];
        let mut best: Option<Hit> = None;
        let mut limit = t_max;
        let mut stack = [0usize; 64];
        let mut top = 1;
        while top > 0 {
            top -= 1;
            let id = stack[top];
            let node = &self.nodes[id];
            if !slab(node, origin, &inv, t_min, limit) {
                continue;
            }
            if node.count > 0 {
                let first = node.index as usize;
                for &t in &self.order[first..first + node.count as usize] {
                    if let Some(d) = triangle_hit(&self.tris[t as usize], origin, dir) {
                        let better = match best {
                            None => true,
                            Some(b) => d < b.t || (d == b.t && t < b.triangle),
                        };
                        if d > t_min && d <= limit && better {
                            best = Some(Hit { t: d, triangle: t });
                            limit = d;
                        }
                    }
                }
            } else {
                // Left child directly follows its parent.
                stack[top] = node.index as usize;
                stack[top + 1] = id + 1;
                top += 2;
            }
        }
        best
    }
}

#[inline]
fn slab(node: &Node, o: &Point, inv: &[f64; 3], t_min: f64, t_max: f64) -> bool {
    let mut lo = t_min;
    let mut hi = t_max;
    for k in 0..3 {
        let a = (node.min[k] - o[k]) * inv[k];
        let b = (node.max[k] - o[k]) * inv[k];
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        // NaN from 0 * inf keeps the current interval.
        if a > lo {
            lo = a;
        }
        if b < hi {
            hi = b;
        }
        if lo > hi {
            return false;
        }
    }
    true
}

/// Moller-Trumbore with inclusive edges. Returns the ray parameter.
#[inline]
pub fn triangle_hit(tri: &[Point; 3], o: &Point, d: &Vector) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&q) * inv)
}
