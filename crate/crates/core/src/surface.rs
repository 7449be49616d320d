//! Local surface frames at frontier points.

use nalgebra::{Matrix3, SymmetricEigen, Unit};

use crate::cloud::ObservedCloud;
use crate::error::{Error, Result};
use crate::geometry::{Point, UnitVector, Vector, View};
use crate::index::KdTree;
use crate::params::ObservationParams;

/// Orthonormal frame at a frontier: surface normal, direction towards the
/// unobserved side, and the boundary tangent `normal x frontier`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceFrame {
    pub normal: UnitVector,
    pub frontier: UnitVector,
    pub boundary: UnitVector,
}

impl SurfaceFrame {
    pub fn new(normal: UnitVector, frontier: UnitVector) -> Self {
        Self {
            normal,
            frontier,
            boundary: Unit::new_normalize(normal.cross(&frontier)),
        }
    }
}

/// The measurements of one capture projected onto the unit sphere about the view.
#[derive(Clone, Debug)]
pub struct CaptureProjection {
    origin: Point,
    ranges: Vec<f64>,
    tree: KdTree,
}

impl CaptureProjection {
    pub fn new(view: &View, points: &[Point]) -> Self {
        let mut ranges = Vec::with_capacity(points.len());
        let mut dirs = Vec::with_capacity(points.len());
        for p in points {
            let v = p - view.position;
            let n = v.norm();
            if n > 0.0 && n.is_finite() {
                ranges.push(n);
                dirs.push([v.x / n, v.y / n, v.z / n]);
            }
        }
        Self {
            origin: view.position,
            ranges,
            tree: KdTree::build(dirs),
        }
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    /// True if a measurement nearer than `range` projects within chord
    /// distance `radius` of `dir`.
    pub fn blocked(&self, dir: &UnitVector, range: f64, radius: f64) -> bool {
        let q = [dir.x, dir.y, dir.z];
        self.tree
            .within(&q, radius)
            .into_iter()
            .any(|i| self.ranges[i] < range)
    }
}

/// Eigenpairs of a symmetric 3x3 matrix, eigenvalues ascending. Equal
/// eigenvalues keep the solver's column order.
pub fn sorted_eigen(a: &Matrix3<f64>) -> ([f64; 3], [Vector; 3]) {
    let eig = SymmetricEigen::new(*a);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    (
        order.map(|i| eig.eigenvalues[i]),
        order.map(|i| eig.eigenvectors.column(i).into_owned()),
    )
}

/// Picks between `candidate` and its negation by which one the current view
/// could see past the newly captured measurements.
///
/// Both directions are walked out from the frontier in steps of `upsilon` for at
/// most `ceil(psi / upsilon)` steps; a step is free when no projected
/// measurement closer than the walked point lies within `upsilon` on the
/// sphere. The candidate is flipped only when the negative side frees up first.
pub fn direct_normal(
    current_view: &View,
    frontier: &Point,
    candidate: UnitVector,
    projection: &CaptureProjection,
    params: &ObservationParams,
) -> UnitVector {
    let step = params.upsilon * candidate.into_inner();
    let mut w_pos = frontier - current_view.position;
    let mut w_neg = w_pos;
    let max_steps = (params.psi / params.upsilon).ceil().max(1.0) as usize;
    for _ in 0..max_steps {
        w_pos += step;
        w_neg -= step;
        let free = |w: &Vector| match Unit::try_new(*w, 1e-15) {
            Some(dir) => !projection.blocked(&dir, w.norm(), params.upsilon),
            None => true,
        };
        let pos_free = free(&w_pos);
        let neg_free = free(&w_neg);
        if pos_free || neg_free {
            return if !pos_free && neg_free {
                -candidate
            } else {
                candidate
            };
        }
    }
    log::debug!("normal direction at {frontier:?} undecided after {max_steps} steps");
    candidate
}

/// Surface frame at `frontier` from the covariance of its `r`-neighbourhood.
pub fn estimate_surface(
    cloud: &ObservedCloud,
    frontier: &Point,
    current_view: &View,
    projection: &CaptureProjection,
    params: &ObservationParams,
) -> Result<SurfaceFrame> {
    let neighbours = cloud.neighbors_within(frontier, params.r);
    let mut members: Vec<Point> = neighbours.iter().map(|&id| cloud.position(id)).collect();
    if !members.iter().any(|p| p == frontier) {
        members.push(*frontier);
    }
    if members.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "{} points in the neighbourhood",
            members.len()
        )));
    }
    let mut a = Matrix3::zeros();
    let mut mean_offset = Vector::zeros();
    for p in &members {
        let d = p - frontier;
        a += d * d.transpose();
        mean_offset -= d;
    }
    mean_offset /= members.len() as f64;

    let (values, vectors) = sorted_eigen(&a);
    if values[1] <= 1e-12 * values[2].max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateGeometry("collinear neighbourhood".into()));
    }
    let normal = direct_normal(
        current_view,
        frontier,
        Unit::new_normalize(vectors[0]),
        projection,
        params,
    );

    let tangent = if mean_offset.dot(&vectors[2]).abs() > mean_offset.dot(&vectors[1]).abs() {
        vectors[2]
    } else {
        vectors[1]
    };
    let along = mean_offset.dot(&tangent);
    let tangent = if mean_offset.norm() < 1e-9 * params.r {
        log::debug!("symmetric neighbourhood at {frontier:?}, frontier direction unsigned");
        tangent
    } else if along < 0.0 {
        -tangent
    } else {
        tangent
    };
    Ok(SurfaceFrame::new(normal, Unit::new_normalize(tangent)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> ObservationParams {
        crate::params::derive_params(
            &ObservationParams::small_model(),
            &crate::params::SensorIntrinsics::rgbd(),
        )
        .unwrap()
    }

    fn overhead() -> View {
        View::new(Point::new(0.0, 0.0, 1.0), -Vector::z_axis())
    }

    fn grid(half: f64, step: f64, keep: impl Fn(f64, f64) -> bool) -> Vec<Point> {
        let n = (half / step).round() as i32;
        let mut out = Vec::new();
        for i in -n..=n {
            for j in -n..=n {
                let (x, y) = (i as f64 * step, j as f64 * step);
                if keep(x, y) {
                    out.push(Point::new(x, y, 0.0));
                }
            }
        }
        out
    }

    fn cloud_of(points: &[Point]) -> ObservedCloud {
        let mut c = ObservedCloud::new(0.0, 0.015);
        c.insert_filtered(points, &overhead());
        c
    }

    #[test]
    fn plane_normal_is_vertical() {
        let pts = grid(0.05, 0.005, |_, _| true);
        let c = cloud_of(&pts);
        let proj = CaptureProjection::new(&overhead(), &[]);
        let f = estimate_surface(&c, &Point::origin(), &overhead(), &proj, &params()).unwrap();
        assert!(f.normal.z.abs() > 1.0 - 1e-9);
    }

    #[test]
    fn half_disk_frame() {
        let pts = grid(0.05, 0.004, |x, y| x <= 0.0 && x * x + y * y <= 0.05 * 0.05);
        let c = cloud_of(&pts);
        let proj = CaptureProjection::new(&overhead(), &pts);
        let f = estimate_surface(&c, &Point::origin(), &overhead(), &proj, &params()).unwrap();
        assert!((f.normal.into_inner() - Vector::z()).norm() < 1e-6);
        assert!((f.frontier.into_inner() - Vector::x()).norm() < 1e-6);
        assert!((f.boundary.into_inner() - Vector::y()).norm() < 1e-6);
    }

    #[test]
    fn too_few_or_collinear_points_are_degenerate() {
        let c = cloud_of(&[Point::origin(), Point::new(0.01, 0.0, 0.0)]);
        let proj = CaptureProjection::new(&overhead(), &[]);
        let e = estimate_surface(&c, &Point::origin(), &overhead(), &proj, &params());
        assert!(matches!(e, Err(Error::DegenerateGeometry(_))));
        let line: Vec<Point> = (0..6).map(|i| Point::new(i as f64 * 0.004, 0.0, 0.0)).collect();
        let e = estimate_surface(&cloud_of(&line), &Point::origin(), &overhead(), &proj, &params());
        assert!(matches!(e, Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn normal_flips_towards_the_viewer() {
        let pts = grid(0.3, 0.002, |_, _| true);
        let proj = CaptureProjection::new(&overhead(), &pts);
        let p = params();
        let up = direct_normal(&overhead(), &Point::origin(), -Vector::z_axis(), &proj, &p);
        assert_eq!(up, Vector::z_axis());
        let up = direct_normal(&overhead(), &Point::origin(), Vector::z_axis(), &proj, &p);
        assert_eq!(up, Vector::z_axis());
    }

    #[test]
    fn no_measurements_keeps_candidate() {
        let proj = CaptureProjection::new(&overhead(), &[]);
        let n = direct_normal(&overhead(), &Point::origin(), -Vector::x_axis(), &proj, &params());
        assert_eq!(n, -Vector::x_axis());
    }

    #[test]
    fn oblique_normal_follows_visible_side() {
        // A tilted plane seen from above-left: the side facing the viewer wins
        // whichever sign the candidate starts with.
        let tilt = Unit::new_normalize(Vector::new(-1.0, 0.0, 1.0));
        let u = Unit::new_normalize(Vector::new(1.0, 0.0, 1.0));
        let mut pts = Vec::new();
        for i in -100..=100 {
            for j in -100..=100 {
                pts.push(Point::origin() + u.into_inner() * (i as f64 * 0.003) + Vector::y() * (j as f64 * 0.003));
            }
        }
        let view = View::looking_at(Point::new(-0.3, 0.0, 0.8), &Point::origin()).unwrap();
        let proj = CaptureProjection::new(&view, &pts);
        for cand in [tilt, -tilt] {
            let n = direct_normal(&view, &Point::origin(), cand, &proj, &params());
            assert_eq!(n, tilt);
        }
    }

    proptest! {
        #[test]
        fn eigenpairs_are_accurate(
            pts in prop::collection::vec(prop::array::uniform3(-1.0..1.0f64), 3..40),
        ) {
            let mut a = Matrix3::zeros();
            for p in &pts {
                let v = Vector::from(*p);
                a += v * v.transpose();
            }
            let (vals, vecs) = sorted_eigen(&a);
            prop_assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
            prop_assert!(vals[0] >= -1e-12 * vals[2].max(1.0));
            for k in 0..3 {
                let res = (a * vecs[k] - vecs[k] * vals[k]).norm();
                prop_assert!(res <= 1e-8 * a.norm().max(1e-12));
            }
        }

        #[test]
        fn frames_are_orthonormal(
            pts in prop::collection::vec(prop::array::uniform3(-0.02..0.02f64), 3..60),
            flat in 0.0..0.004f64,
        ) {
            let pts: Vec<Point> = pts.into_iter().map(|p| Point::new(p[0], p[1], p[2] * flat)).collect();
            let c = cloud_of(&pts);
            let f0 = c.position(crate::cloud::PointId(0));
            let proj = CaptureProjection::new(&overhead(), &pts);
            if let Ok(f) = estimate_surface(&c, &f0, &overhead(), &proj, &params()) {
                prop_assert!(f.normal.dot(&f.frontier).abs() < 1e-6);
                prop_assert!(f.normal.dot(&f.boundary).abs() < 1e-6);
                prop_assert!(f.frontier.dot(&f.boundary).abs() < 1e-6);
                prop_assert!((f.boundary.into_inner() - f.normal.cross(&f.frontier)).norm() < 1e-9);
            }
        }

        #[test]
        fn direct_normal_returns_plus_or_minus_candidate(
            pts in prop::collection::vec(prop::array::uniform3(-0.2..0.2f64), 0..300),
            c in prop::array::uniform3(-1.0..1.0f64),
        ) {
            prop_assume!(Vector::from(c).norm() > 1e-3);
            let cand = Unit::new_normalize(Vector::from(c));
            let pts: Vec<Point> = pts.into_iter().map(Point::from).collect();
            let proj = CaptureProjection::new(&overhead(), &pts);
            let n = direct_normal(&overhead(), &Point::origin(), cand, &proj, &params());
            prop_assert!(n == cand || n == -cand);
        }
    }
}
