//! Simulated depth sensor: one ray per pixel with Gaussian range noise.

use nalgebra::Unit;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Point, UnitVector, Vector, View};
use crate::params::SensorIntrinsics;
use crate::planner::MeasurementSource;

use super::bvh::Bvh;
use super::mesh::SceneMesh;

/// A mesh together with its ray-casting acceleration structure.
#[derive(Clone, Debug)]
pub struct Scene {
    mesh: SceneMesh,
    bvh: Bvh,
}

impl Scene {
    pub fn new(mesh: SceneMesh) -> Self {
        let bvh = Bvh::build(&mesh);
        Self { mesh, bvh }
    }

    pub fn mesh(&self) -> &SceneMesh {
        &self.mesh
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimSensor {
    pub intrinsics: SensorIntrinsics,
    /// Standard deviation of the range noise, m.
    pub sigma: f64,
    pub seed: u64,
    /// Hits beyond this range are discarded.
    pub max_range: f64,
}

impl SimSensor {
    pub fn new(intrinsics: SensorIntrinsics, sigma: f64, seed: u64) -> Result<Self> {
        intrinsics.validate()?;
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma must be non-negative, got {sigma}")));
        }
        Ok(Self {
            intrinsics,
            sigma,
            seed,
            max_range: f64::INFINITY,
        })
    }

    /// Sensor frame: right and up axes for an optical axis, with world z as up
    /// unless the axis is vertical.
    pub fn camera_axes(forward: &UnitVector) -> (Vector, Vector) {
        let reference = if forward.z.abs() > 1.0 - 1e-9 {
            Vector::x()
        } else {
            Vector::z()
        };
        let right = forward.cross(&reference).normalize();
        let up = right.cross(forward);
        (right, up)
    }

    /// Unit ray through the centre of pixel (`col`, `row`), row 0 at the top.
    pub fn pixel_ray(&self, view: &View, col: u32, row: u32) -> UnitVector {
        let k = &self.intrinsics;
        let (right, up) = Self::camera_axes(&view.orientation);
        let fx = k.fov_x_deg.to_radians();
        let fy = k.fov_y_deg.to_radians();
        let ax = -0.5 * fx + (col as f64 + 0.5) * fx / k.width_px as f64;
        let ay = 0.5 * fy - (row as f64 + 0.5) * fy / k.height_px as f64;
        Unit::new_normalize(view.orientation.into_inner() + ax.tan() * right + ay.tan() * up)
    }

    fn row_rng(&self, capture: u64, row: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((capture << 24) ^ row as u64);
        rng
    }

    /// Ray-casts every pixel. `capture` selects an independent noise stream so
    /// repeated captures from one view differ but runs are reproducible.
    pub fn capture(&self, scene: &Scene, view: &View, capture: u64) -> Vec<Point> {
        let rows: Vec<Vec<Point>> = (0..self.intrinsics.height_px)
            .into_par_iter()
            .map(|row| {
                let mut rng = self.row_rng(capture, row);
                let mut out = Vec::new();
                for col in 0..self.intrinsics.width_px {
                    let dir = self.pixel_ray(view, col, row);
                    if let Some(hit) = scene.bvh.intersect(&view.position, &dir, 1e-9, self.max_range) {
                        let range = if self.sigma > 0.0 {
                            let z: f64 = rng.sample(StandardNormal);
                            hit.t + self.sigma * z
                        } else {
                            hit.t
                        };
                        out.push(view.position + range * dir.into_inner());
                    }
                }
                out
            })
            .collect();
        rows.concat()
    }
}

/// A [`MeasurementSource`] that counts its captures.
pub struct SimulatedCamera<'a> {
    pub scene: &'a Scene,
    pub sensor: SimSensor,
    captures: u64,
}

impl<'a> SimulatedCamera<'a> {
    pub fn new(scene: &'a Scene, sensor: SimSensor) -> Self {
        Self {
            scene,
            sensor,
            captures: 0,
        }
    }
}

impl MeasurementSource for SimulatedCamera<'_> {
    fn capture(&mut self, view: &View) -> Vec<Point> {
        let pts = self.sensor.capture(self.scene, view, self.captures);
        self.captures += 1;
        pts
    }
}
