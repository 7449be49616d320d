//! Spatial indices: an insert-only hash grid for the growing cloud and a
//! static kd-tree for one-shot direction sets.

use rustc_hash::FxHashMap;

use crate::geometry::Point;

#[derive(Clone, Copy, Debug)]
struct Slot {
    p: [f64; 3],
    id: u32,
}

type CellKey = [i32; 3];

/// Uniform hash grid. All radius queries are closed balls.
#[derive(Clone, Debug)]
pub struct SpatialHash {
    cell: f64,
    inv_cell: f64,
    cells: FxHashMap<CellKey, Vec<Slot>>,
    len: usize,
}

impl SpatialHash {
    pub fn new(cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        Self {
            cell,
            inv_cell: 1.0 / cell,
            cells: FxHashMap::default(),
            len: 0,
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    fn coord(&self, x: f64) -> i32 {
        (x * self.inv_cell).floor().clamp(i32::MIN as f64, i32::MAX as f64) as i32
    }

    #[inline]
    fn key(&self, p: &[f64; 3]) -> CellKey {
        [self.coord(p[0]), self.coord(p[1]), self.coord(p[2])]
    }

    pub fn insert(&mut self, id: u32, p: &Point) {
        let p = [p.x, p.y, p.z];
        let key = self.key(&p);
        self.cells.entry(key).or_default().push(Slot { p, id });
        self.len += 1;
    }

    /// Visits every stored point within `radius` of `c`. The visitor gets the
    /// id and squared distance and returns `false` to stop early. Visit order
    /// is unspecified. Returns `false` if stopped early.
    pub fn visit_within<F>(&self, c: &Point, radius: f64, mut f: F) -> bool
    where
        F: FnMut(u32, f64) -> bool,
    {
        if radius < 0.0 || self.len == 0 {
            return true;
        }
        let r2 = radius * radius;
        let c = [c.x, c.y, c.z];
        let lo = [
            self.coord(c[0] - radius),
            self.coord(c[1] - radius),
            self.coord(c[2] - radius),
        ];
        let hi = [
            self.coord(c[0] + radius),
            self.coord(c[1] + radius),
            self.coord(c[2] + radius),
        ];
        let span = (0..3).fold(1u64, |acc, i| {
            acc.saturating_mul((hi[i] as i64 - lo[i] as i64 + 1) as u64)
        });

        let mut scan = |slots: &Vec<Slot>| -> bool {
            for s in slots {
                let d2 = (s.p[0] - c[0]).powi(2) + (s.p[1] - c[1]).powi(2) + (s.p[2] - c[2]).powi(2);
                if d2 <= r2 && !f(s.id, d2) {
                    return false;
                }
            }
            true
        };

        if span > self.cells.len() as u64 {
            for (key, slots) in &self.cells {
                if (0..3).all(|i| key[i] >= lo[i] && key[i] <= hi[i]) && !scan(slots) {
                    return false;
                }
            }
            return true;
        }
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    if let Some(slots) = self.cells.get(&[x, y, z]) {
                        if !scan(slots) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    pub fn any_within(&self, c: &Point, radius: f64) -> bool {
        !self.visit_within(c, radius, |_, _| false)
    }

    pub fn count_within(&self, c: &Point, radius: f64) -> usize {
        let mut n = 0;
        self.visit_within(c, radius, |_, _| {
            n += 1;
            true
        });
        n
    }

    /// Ids within `radius`, ascending.
    pub fn within(&self, c: &Point, radius: f64) -> Vec<u32> {
        let mut out = Vec::new();
        self.visit_within(c, radius, |id, _| {
            out.push(id);
            true
        });
        out.sort_unstable();
        out
    }
}

const KD_LEAF: usize = 8;

/// Static kd-tree over a fixed point set, median split on the widest axis.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<u32>,
    axis: Vec<u8>,
}

impl KdTree {
    pub fn build(points: Vec<[f64; 3]>) -> Self {
        let n = points.len();
        let mut tree = Self {
            order: (0..n as u32).collect(),
            axis: vec![0; n],
            points,
        };
        tree.build_range(0, n);
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        self.points[i]
    }

    fn build_range(&mut self, lo: usize, hi: usize) {
        if hi - lo <= KD_LEAF {
            return;
        }
        let mut mn = [f64::INFINITY; 3];
        let mut mx = [f64::NEG_INFINITY; 3];
        for &i in &self.order[lo..hi] {
            let p = self.points[i as usize];
            for k in 0..3 {
                mn[k] = mn[k].min(p[k]);
                mx[k] = mx[k].max(p[k]);
            }
        }
        let ax = (0..3)
            .max_by(|&a, &b| (mx[a] - mn[a]).total_cmp(&(mx[b] - mn[b])))
            .unwrap_or(0);
        let mid = (lo + hi) / 2;
        let pts = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            pts[a as usize][ax].total_cmp(&pts[b as usize][ax])
        });
        self.axis[mid] = ax as u8;
        self.build_range(lo, mid);
        self.build_range(mid + 1, hi);
    }

    #[inline]
    fn d2(&self, i: u32, q: &[f64; 3]) -> f64 {
        let p = self.points[i as usize];
        (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)
    }

    /// Index and squared distance of the nearest point; ties go to the lower index.
    pub fn nearest(&self, q: &[f64; 3]) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (u32::MAX, f64::INFINITY);
        self.nearest_range(0, self.points.len(), q, &mut best);
        Some((best.0 as usize, best.1))
    }

    fn nearest_range(&self, lo: usize, hi: usize, q: &[f64; 3], best: &mut (u32, f64)) {
        let consider = |i: u32, best: &mut (u32, f64)| {
            let d = self.d2(i, q);
            if d < best.1 || (d == best.1 && i < best.0) {
                *best = (i, d);
            }
        };
        if hi - lo <= KD_LEAF {
            for &i in &self.order[lo..hi] {
                consider(i, best);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let ax = self.axis[mid] as usize;
        let pivot = self.order[mid];
        let delta = q[ax] - self.points[pivot as usize][ax];
        let (near, far) = if delta <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_range(near.0, near.1, q, best);
        consider(pivot, best);
        if delta * delta <= best.1 {
            self.nearest_range(far.0, far.1, q, best);
        }
    }

    /// Indices within `radius` (closed), ascending.
    pub fn within(&self, q: &[f64; 3], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if radius >= 0.0 && !self.points.is_empty() {
            self.within_range(0, self.points.len(), q, radius * radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn within_range(&self, lo: usize, hi: usize, q: &[f64; 3], r2: f64, out: &mut Vec<usize>) {
        if hi - lo <= KD_LEAF {
            out.extend(
                self.order[lo..hi]
                    .iter()
                    .filter(|&&i| self.d2(i, q) <= r2)
                    .map(|&i| i as usize),
            );
            return;
        }
        let mid = (lo + hi) / 2;
        let ax = self.axis[mid] as usize;
        let pivot = self.order[mid];
        let delta = q[ax] - self.points[pivot as usize][ax];
        if self.d2(pivot, q) <= r2 {
            out.push(pivot as usize);
        }
        if delta <= 0.0 || delta * delta <= r2 {
            self.within_range(lo, mid, q, r2, out);
        }
        if delta >= 0.0 || delta * delta <= r2 {
            self.within_range(mid + 1, hi, q, r2, out);
        }
    }
}
