//! Shared fixtures for the hot-path benchmarks.

use nalgebra::Unit;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use see_core::{Point, UnitVector, Vector};

/// `n` noisy samples of a sphere of `radius` centred at the origin.
pub fn sphere_shell(n: usize, radius: f64, noise: f64, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let d = random_direction(&mut rng);
            let r = radius + noise * (rng.random::<f64>() - 0.5);
            Point::from(d.into_inner() * r)
        })
        .collect()
}

/// `n` random directions within `half_angle` radians of `axis`.
pub fn cone_directions(n: usize, axis: &UnitVector, half_angle: f64, seed: u64) -> Vec<UnitVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let d = random_direction(&mut rng);
        if d.dot(axis).acos() <= half_angle {
            out.push(d);
        }
    }
    out
}

pub fn random_direction<R: Rng>(rng: &mut R) -> UnitVector {
    loop {
        let v = Vector::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return Unit::new_normalize(v);
        }
    }
}
