//! Evaluation metrics: surface coverage and travel distance.

use crate::geometry::Point;
use crate::index::SpatialHash;

/// Fraction of `vertices` with at least one of `points` within `eta` (closed ball).
/// An empty vertex set counts as fully covered.
pub fn coverage(vertices: &[Point], points: &[Point], eta: f64) -> f64 {
    if vertices.is_empty() {
        return 1.0;
    }
    let mut hash = SpatialHash::new(eta);
    for (i, p) in points.iter().enumerate() {
        hash.insert(i as u32, p);
    }
    let covered = vertices.iter().filter(|v| hash.any_within(v, eta)).count();
    covered as f64 / vertices.len() as f64
}

/// Coverage maintained incrementally as points arrive.
#[derive(Clone, Debug)]
pub struct CoverageTracker {
    eta: f64,
    vertices: SpatialHash,
    covered: Vec<bool>,
    count: usize,
}

impl CoverageTracker {
    pub fn new(vertices: &[Point], eta: f64) -> Self {
        let mut hash = SpatialHash::new(eta);
        for (i, v) in vertices.iter().enumerate() {
            hash.insert(i as u32, v);
        }
        Self {
            eta,
            vertices: hash,
            covered: vec![false; vertices.len()],
            count: 0,
        }
    }

    pub fn add<'a, I: IntoIterator<Item = &'a Point>>(&mut self, points: I) {
        for p in points {
            let covered = &mut self.covered;
            let count = &mut self.count;
            self.vertices.visit_within(p, self.eta, |i, _| {
                let c = &mut covered[i as usize];
                if !*c {
                    *c = true;
                    *count += 1;
                }
                true
            });
        }
    }

    pub fn covered(&self) -> usize {
        self.count
    }

    pub fn ratio(&self) -> f64 {
        if self.covered.is_empty() {
            1.0
        } else {
            self.count as f64 / self.covered.len() as f64
        }
    }
}

/// Total length of the polyline through `positions`.
pub fn path_length(positions: &[Point]) -> f64 {
    positions.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Vec<Point> {
        (0..10)
            .flat_map(|i| (0..10).map(move |j| Point::new(i as f64 * 0.1, j as f64 * 0.1, 0.0)))
            .collect()
    }

    #[test]
    fn coverage_examples() {
        let v = grid();
        assert_eq!(coverage(&v, &v, 0.005), 1.0);
        assert_eq!(coverage(&v, &[], 0.005), 0.0);
        let half: Vec<Point> = v.iter().filter(|p| p.x < 0.45).map(|p| p + nalgebra::Vector3::new(0.0, 0.0, 0.004)).collect();
        assert_eq!(coverage(&v, &half, 0.005), 0.5);
    }

    #[test]
    fn path_length_sums_segments() {
        let p = [Point::origin(), Point::new(3.0, 4.0, 0.0), Point::new(3.0, 4.0, 1.0)];
        assert_eq!(path_length(&p), 6.0);
        assert_eq!(path_length(&p[..1]), 0.0);
    }

    proptest! {
        #[test]
        fn tracker_matches_batch_and_is_monotone(
            pts in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, -0.05..0.05f64), 0..120),
            eta in 0.01..0.2f64,
        ) {
            let v = grid();
            let pts: Vec<Point> = pts.into_iter().map(|(x, y, z)| Point::new(x, y, z)).collect();
            let mut t = CoverageTracker::new(&v, eta);
            let mut last = 0.0;
            for (k, chunk) in pts.chunks(17).enumerate() {
                t.add(chunk);
                prop_assert!(t.ratio() >= last);
                last = t.ratio();
                let upto = (k * 17 + chunk.len()).min(pts.len());
                let brute = v
                    .iter()
                    .filter(|q| pts[..upto].iter().any(|p| (p - *q).norm_squared() <= eta * eta))
                    .count();
                prop_assert_eq!(t.covered(), brute);
            }
            prop_assert_eq!(t.ratio(), coverage(&v, &pts, eta));
        }
    }
}
