//! Sight-line occlusion tests and maximin view optimisation.

use nalgebra::{DMatrix, DVector, Unit};
use rustc_hash::FxHashMap;

use crate::cloud::{ObservedCloud, PointId};
use crate::error::{Error, Result};
use crate::geometry::{Point, UnitVector, Vector, View};
use crate::index::KdTree;
use crate::params::ObservationParams;
use crate::surface::SurfaceFrame;

/// Below this objective the full-sphere program is treated as degenerate.
pub const FULL_SPHERE_THRESHOLD: f64 = 1e-4;
/// Iteration budget of each local refinement.
pub const MAX_ITERATIONS: usize = 200;

/// Objective decrease below which a refinement stage counts as stationary.
const STALL_TOLERANCE: f64 = 1e-10;

/// Distance along the normal from `frontier` to the first `upsilon`-ball free
/// of stored points, in multiples of `upsilon`, saturating at `psi`.
pub fn visibility_offset(
    cloud: &ObservedCloud,
    frontier: &Point,
    frame: &SurfaceFrame,
    params: &ObservationParams,
) -> f64 {
    let max_steps = ((params.psi / params.upsilon) - 1e-9).ceil().max(1.0) as usize;
    let n = frame.normal.into_inner();
    for k in 1..=max_steps {
        let zeta = k as f64 * params.upsilon;
        if !cloud.any_within(&(frontier + zeta * n), params.upsilon) {
            return zeta;
        }
    }
    max_steps as f64 * params.upsilon
}

/// Sample offsets along a sight line: `zeta`, `zeta + upsilon`, ... below `psi`, then `psi`.
fn sight_samples(zeta: f64, params: &ObservationParams) -> impl Iterator<Item = f64> {
    let upsilon = params.upsilon;
    let psi = params.psi;
    let tol = 1e-9 * upsilon;
    let steps = if zeta < psi {
        ((psi - zeta) / upsilon - 1e-9).ceil() as usize
    } else {
        1
    };
    (0..steps)
        .map(move |k| zeta + k as f64 * upsilon)
        .chain((zeta < psi - tol).then_some(psi))
}

/// True if stored points sit within `upsilon` of the sight line from `view`
/// to `frontier`, sampled from the visibility offset out to `psi`.
pub fn is_occluded(
    cloud: &ObservedCloud,
    view: &View,
    frontier: &Point,
    frame: &SurfaceFrame,
    params: &ObservationParams,
) -> bool {
    let zeta = visibility_offset(cloud, frontier, frame, params);
    is_occluded_from(cloud, view, frontier, zeta, params)
}

/// [`is_occluded`] with a precomputed visibility offset.
pub fn is_occluded_from(
    cloud: &ObservedCloud,
    view: &View,
    frontier: &Point,
    zeta: f64,
    params: &ObservationParams,
) -> bool {
    let Some(sight) = Unit::try_new(frontier - view.position, 1e-12) else {
        return false;
    };
    sight_samples(zeta, params).any(|i| cloud.any_within(&(frontier - i * sight.into_inner()), params.upsilon))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CapMode {
    FullSphere,
    Hemisphere,
}

/// Solution of the spherical cap program.
///
/// `clear_direction` is the unit direction that keeps the largest minimum
/// angle to the input set; it equals `n / |n|` for the full-sphere branch and
/// `-n / |n|` for the hemisphere branch, and is still defined when `n = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalCapSolution {
    pub n: Vector,
    pub e: f64,
    pub mode: CapMode,
    pub clear_direction: UnitVector,
}

impl SphericalCapSolution {
    /// Largest violation of this branch's constraints over `dirs`.
    pub fn constraint_violation(&self, dirs: &[UnitVector]) -> f64 {
        let nn = self.n.norm_squared();
        let worst_dot = |f: fn(f64, f64) -> f64, init: f64| dirs.iter().map(|j| self.n.dot(j)).fold(init, f);
        match self.mode {
            CapMode::FullSphere => {
                let max = worst_dot(f64::max, f64::NEG_INFINITY);
                (self.e - nn).max(max - self.e).max(0.0)
            }
            CapMode::Hemisphere => {
                let min = worst_dot(f64::min, f64::INFINITY);
                (nn - self.e).max(self.e - min).max(0.0)
            }
        }
    }
}

/// Largest dot product between `u` and any of `dirs`.
fn max_dot(dirs: &[Vector], u: &Vector) -> f64 {
    dirs.iter().map(|j| u.dot(j)).fold(f64::NEG_INFINITY, f64::max)
}

/// One representative per occupied cell of a `bin`-sized grid, first seen wins.
fn thin_directions(dirs: &[Vector], bin: f64) -> Vec<Vector> {
    let mut seen: FxHashMap<[i32; 3], ()> = FxHashMap::default();
    let inv = 1.0 / bin;
    dirs.iter()
        .filter(|d| {
            let key = [
                (d.x * inv).floor() as i32,
                (d.y * inv).floor() as i32,
                (d.z * inv).floor() as i32,
            ];
            seen.insert(key, ()).is_none()
        })
        .copied()
        .collect()
}

/// Roughly uniform directions on the unit sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<Vector> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vector::new(rho * phi.cos(), rho * phi.sin(), z)
        })
        .collect()
}

struct DirectionPool {
    dirs: Vec<Vector>,
    tree: KdTree,
}

impl DirectionPool {
    fn new(dirs: Vec<Vector>) -> Self {
        let tree = KdTree::build(dirs.iter().map(|d| [d.x, d.y, d.z]).collect());
        Self { dirs, tree }
    }

    fn max_dot(&self, u: &Vector) -> f64 {
        match self.tree.nearest(&[u.x, u.y, u.z]) {
            Some((i, _)) => u.dot(&self.dirs[i]),
            None => f64::NEG_INFINITY,
        }
    }

    /// Directions whose dot with `u` is at least `floor`.
    fn above(&self, u: &Vector, floor: f64) -> Vec<Vector> {
        let chord2 = (2.0 - 2.0 * floor).max(0.0);
        self.tree
            .within(&[u.x, u.y, u.z], chord2.sqrt() * (1.0 + 1e-12))
            .into_iter()
            .map(|i| self.dirs[i])
            .filter(|j| u.dot(j) >= floor)
            .collect()
    }
}

/// Log-sum-exp smoothing of `max_j u.j` and its gradient.
fn smoothed(active: &[Vector], u: &Vector, beta: f64) -> (f64, Vector) {
    let m = max_dot(active, u);
    let mut sum = 0.0;
    let mut grad = Vector::zeros();
    for j in active {
        let w = (beta * (u.dot(j) - m)).exp();
        sum += w;
        grad += w * j;
    }
    (m + sum.ln() / beta, grad / sum)
}

struct Refinement {
    u: UnitVector,
    iterations: usize,
    converged: bool,
}

/// Minimises `max_j u.j` on the sphere by projected gradient descent on a
/// smoothed objective with increasing sharpness.
fn refine(coarse: &DirectionPool, fine: &DirectionPool, full: &[Vector], start: UnitVector) -> Refinement {
    const STAGES: [(f64, u8); 8] = [
        (30.0, 0),
        (100.0, 0),
        (300.0, 1),
        (1e3, 1),
        (3e3, 1),
        (1e4, 1),
        (3e4, 1),
        (1e5, 2),
    ];
    let per_stage = MAX_ITERATIONS / STAGES.len();
    let mut u = start.into_inner();
    let mut iterations = 0;
    let mut converged = false;
    for (beta, level) in STAGES {
        let margin = 40.0 / beta;
        let active = match level {
            0 => coarse.above(&u, coarse.max_dot(&u) - margin),
            1 => fine.above(&u, fine.max_dot(&u) - margin),
            _ => {
                let floor = max_dot(full, &u) - margin.max(0.02);
                full.iter().filter(|j| u.dot(j) >= floor).copied().collect()
            }
        };
        let mut step = 0.1;
        converged = false;
        for _ in 0..per_stage {
            iterations += 1;
            let (f, grad) = smoothed(&active, &u, beta);
            let g = grad - grad.dot(&u) * u;
            let g2 = g.norm_squared();
            if g2 < 1e-18 {
                converged = true;
                break;
            }
            let mut next = None;
            step *= 2.0;
            while step > 1e-14 {
                let cand = (u - step * g).normalize();
                let fc = smoothed(&active, &cand, beta).0;
                if fc <= f - 1e-4 * step * g2 {
                    next = Some((cand, fc));
                    break;
                }
                step *= 0.5;
            }
            match next {
                Some((cand, fc)) => {
                    u = cand;
                    if f - fc <= STALL_TOLERANCE {
                        converged = true;
                        break;
                    }
                }
                None => {
                    converged = true;
                    break;
                }
            }
        }
    }
    Refinement {
        u: Unit::new_normalize(u),
        iterations,
        converged,
    }
}

/// Direction minimising `max_j u.j` over the sphere: global coarse search
/// followed by local refinement from the best few candidates and `init`.
fn maximin(full: &[Vector], init: &UnitVector) -> Refinement {
    let fine = DirectionPool::new(thin_directions(full, 0.02));
    let coarse = DirectionPool::new(thin_directions(&fine.dirs, 0.06));

    let mut candidates: Vec<(f64, Vector)> = fibonacci_sphere(2000)
        .into_iter()
        .map(|c| (coarse.max_dot(&c), c))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut starts: Vec<UnitVector> = vec![*init];
    for (_, c) in candidates {
        if starts.len() == 4 {
            break;
        }
        if starts[1..].iter().all(|s| s.dot(&c) < 20f64.to_radians().cos()) {
            starts.push(Unit::new_normalize(c));
        }
    }

    let mut best: Option<(f64, Refinement)> = None;
    for s in starts {
        let r = refine(&coarse, &fine, full, s);
        let h = max_dot(full, &r.u);
        if best.as_ref().is_none_or(|(bh, _)| h < *bh) {
            best = Some((h, r));
        }
    }
    let (_, mut r) = best.expect("at least one start");
    let (u, converged) = descend(full, r.u);
    r.u = u;
    r.converged = converged;
    r
}

/// Rounds of exact polishing and subgradient descent after refinement.
const DESCENT_ROUNDS: usize = 30;
/// Directions within this dot-product gap of the maximum count as active.
const ACTIVE_GAP: f64 = 1e-5;
/// Stationarity threshold on the minimum-norm active subgradient.
const GRADIENT_TOLERANCE: f64 = 1e-3;

/// Alternates [`polish`] with steepest descent along the minimum-norm
/// subgradient until `u` is stationary. Returns the last iterate and whether
/// it passed the stationarity test.
fn descend(full: &[Vector], mut u: UnitVector) -> (UnitVector, bool) {
    for _ in 0..DESCENT_ROUNDS {
        u = polish(full, u);
        let x = min_subgradient(full, &u);
        if x.norm() <= GRADIENT_TOLERANCE {
            return (u, true);
        }
        let d = -x.normalize();
        let f0 = max_dot(full, &u);
        let along = |t: f64| Unit::new_normalize(t.cos() * u.into_inner() + t.sin() * d);
        let (mut lo, mut hi) = (0.0, 0.5);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..40 {
            let a = hi - phi * (hi - lo);
            let b = lo + phi * (hi - lo);
            if max_dot(full, &along(a)) <= max_dot(full, &along(b)) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let next = along(0.5 * (lo + hi));
        if max_dot(full, &next) >= f0 {
            break;
        }
        u = next;
    }
    let ok = min_subgradient(full, &u).norm() <= GRADIENT_TOLERANCE;
    (u, ok)
}

/// Number of most-active directions whose pairs and triples are tried by [`polish`].
const POLISH_CANDIDATES: usize = 6;

/// Replaces `u` by the best exact local solution supported on one, two or
/// three of its most active directions, if that is no worse.
fn polish(full: &[Vector], u: UnitVector) -> UnitVector {
    let mut order: Vec<usize> = (0..full.len()).collect();
    order.sort_by(|&a, &b| u.dot(&full[b]).total_cmp(&u.dot(&full[a])).then(a.cmp(&b)));
    order.truncate(POLISH_CANDIDATES);
    let c: Vec<Vector> = order.iter().map(|&i| full[i]).collect();
    let mut trial: Vec<Vector> = c.iter().map(|a| -a).collect();
    for a in 0..c.len() {
        for b in a + 1..c.len() {
            trial.push(-(c[a] + c[b]));
            for k in b + 1..c.len() {
                let n = (c[b] - c[a]).cross(&(c[k] - c[a]));
                trial.push(if n.dot(&c[a]) > 0.0 { -n } else { n });
            }
        }
    }
    let mut best = (max_dot(full, &u), u);
    for t in trial {
        let Some(t) = Unit::try_new(t, 1e-12) else {
            continue;
        };
        let h = max_dot(full, &t);
        if h < best.0 {
            best = (h, t);
        }
    }
    best.1
}

/// Minimum-norm element of the convex hull of the tangential gradients of
/// the nearly active directions at `u`. Zero at a stationary point of `max_j u.j`.
fn min_subgradient(full: &[Vector], u: &UnitVector) -> Vector {
    let h = max_dot(full, u);
    let grads: Vec<Vector> = full
        .iter()
        .filter(|j| u.dot(j) >= h - ACTIVE_GAP)
        .map(|j| j - u.dot(j) * u.into_inner())
        .collect();
    let start = (0..grads.len())
        .min_by(|&a, &b| grads[a].norm_squared().total_cmp(&grads[b].norm_squared()))
        .expect("the maximiser is active");
    min_norm_point(&grads, start).0
}

/// Minimum-norm point of the convex hull of `p` (Wolfe's method), and
/// whether the optimality test passed within the iteration budget.
fn min_norm_point(p: &[Vector], start: usize) -> (Vector, bool) {
    let mut support = vec![start];
    let mut lambda = vec![1.0];
    let mut x = p[start];
    for _ in 0..MAX_ITERATIONS {
        let (j, xj) = p
            .iter()
            .enumerate()
            .map(|(i, v)| (i, x.dot(v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        if x.norm_squared() - xj <= 1e-12 || support.contains(&j) {
            return (x, true);
        }
        support.push(j);
        lambda.push(0.0);
        loop {
            let Some(alpha) = affine_minimiser(p, &support) else {
                return (x, true);
            };
            if alpha.iter().all(|&a| a > 1e-12) {
                lambda = alpha;
                break;
            }
            let theta = (0..support.len())
                .filter(|&i| alpha[i] <= 1e-12)
                .map(|i| lambda[i] / (lambda[i] - alpha[i]))
                .fold(1.0, f64::min);
            for i in 0..support.len() {
                lambda[i] = theta * alpha[i] + (1.0 - theta) * lambda[i];
            }
            let mut k = 0;
            support.retain(|_| {
                let keep = lambda[k] > 1e-12;
                k += 1;
                keep
            });
            lambda.retain(|&l| l > 1e-12);
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
        }
        x = support
            .iter()
            .zip(&lambda)
            .fold(Vector::zeros(), |acc, (&i, &l)| acc + l * p[i]);
    }
    (x, false)
}

/// Weights of the minimum-norm point in the affine hull of `p[support]`.
fn affine_minimiser(p: &[Vector], support: &[usize]) -> Option<Vec<f64>> {
    let k = support.len();
    let mut m = DMatrix::zeros(k + 1, k + 1);
    for a in 0..k {
        for b in 0..k {
            m[(a, b)] = p[support[a]].dot(&p[support[b]]);
        }
        m[(a, k)] = 1.0;
        m[(k, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = m.full_piv_lu().solve(&rhs)?;
    let alpha: Vec<f64> = sol.iter().take(k).copied().collect();
    alpha.iter().all(|a| a.is_finite()).then_some(alpha)
}

/// Smallest spherical cap program over the directions `j`.
///
/// The full-sphere branch looks for the largest cap free of `j` with `init` as
/// the starting normal; when `j` fits inside a hemisphere that program
/// degenerates and the hemisphere branch instead finds the smallest cap
/// containing `j`, starting from `-init`.
pub fn solve_min_cap(j: &[UnitVector], init: &UnitVector) -> Result<SphericalCapSolution> {
    if j.is_empty() {
        return Err(Error::DegenerateGeometry("no directions to optimise against".into()));
    }
    let full: Vec<Vector> = j.iter().map(|v| v.into_inner()).collect();
    let kernel = maximin(&full, init);
    let u = kernel.u;
    let h = max_dot(&full, &u);

    let (solution, converged) = if h > 0.0 && h * h > FULL_SPHERE_THRESHOLD {
        let s = SphericalCapSolution {
            n: h * u.into_inner(),
            e: h * h,
            mode: CapMode::FullSphere,
            clear_direction: u,
        };
        (s, kernel.converged)
    } else {
        let w0 = -init.into_inner();
        let start = (0..full.len())
            .max_by(|&a, &b| w0.dot(&full[a]).total_cmp(&w0.dot(&full[b])).then(b.cmp(&a)))
            .expect("non-empty");
        let (x, converged) = min_norm_point(&full, start);
        let s = match Unit::try_new(x, 1e-9) {
            Some(w) => {
                let mu = full.iter().map(|v| w.dot(v)).fold(f64::INFINITY, f64::min);
                if mu > 0.0 {
                    SphericalCapSolution {
                        n: mu * w.into_inner(),
                        e: mu * mu,
                        mode: CapMode::Hemisphere,
                        clear_direction: -w,
                    }
                } else {
                    degenerate_hemisphere(u)
                }
            }
            None => degenerate_hemisphere(u),
        };
        (s, converged)
    };
    if converged {
        Ok(solution)
    } else {
        Err(Error::Optimisation {
            iterations: kernel.iterations,
            best: solution,
        })
    }
}

fn degenerate_hemisphere(u: UnitVector) -> SphericalCapSolution {
    SphericalCapSolution {
        n: Vector::zeros(),
        e: 0.0,
        mode: CapMode::Hemisphere,
        clear_direction: u,
    }
}

/// Projection centre and occluder directions used by [`optimise_view`].
pub fn occluder_directions(
    cloud: &ObservedCloud,
    frontier: PointId,
    frame: &SurfaceFrame,
    params: &ObservationParams,
) -> (Point, UnitVector, Vec<UnitVector>) {
    let f = cloud.position(frontier);
    let zeta = visibility_offset(cloud, &f, frame, params);
    let observed = Unit::try_new(f - cloud.capture_position(frontier), 1e-12).unwrap_or(-frame.normal);
    let c = f - zeta * observed.into_inner();
    let dirs = cloud
        .neighbors_within(&f, params.psi)
        .into_iter()
        .filter_map(|id| Unit::try_new(cloud.position(id) - c, 1e-12))
        .collect();
    (c, observed, dirs)
}

/// A view of `frontier` at distance `d` along the direction furthest from the
/// surrounding measurements.
pub fn optimise_view(
    cloud: &ObservedCloud,
    frontier: PointId,
    frame: &SurfaceFrame,
    params: &ObservationParams,
) -> View {
    let f = cloud.position(frontier);
    let (_, observed, dirs) = occluder_directions(cloud, frontier, frame, params);
    if dirs.is_empty() {
        return View::facing(&f, observed, params.d);
    }
    let solution = match solve_min_cap(&dirs, &-observed) {
        Ok(s) => s,
        Err(Error::Optimisation { best, iterations }) => {
            log::debug!("view optimisation stopped after {iterations} iterations");
            best
        }
        Err(e) => {
            log::debug!("view optimisation failed: {e}");
            return View::facing(&f, observed, params.d);
        }
    };
    View::facing(&f, -solution.clear_direction, params.d)
}
