//! Observation parameters and their derivation from sensor geometry.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole sensor resolution and field of view.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorIntrinsics {
    pub width_px: u32,
    pub height_px: u32,
    pub fov_x_deg: f64,
    pub fov_y_deg: f64,
}

impl SensorIntrinsics {
    /// Desk-scale RGB-D camera.
    pub fn rgbd() -> Self {
        Self {
            width_px: 848,
            height_px: 480,
            fov_x_deg: 70.0,
            fov_y_deg: 43.0,
        }
    }

    /// Building-scale scanning LiDAR.
    pub fn lidar() -> Self {
        Self {
            width_px: 1200,
            height_px: 800,
            fov_x_deg: 60.0,
            fov_y_deg: 40.0,
        }
    }

    fn pixel_product(&self) -> f64 {
        self.width_px as f64 * self.height_px as f64
    }

    fn half_tan_product(&self) -> f64 {
        (0.5 * self.fov_x_deg.to_radians()).tan() * (0.5 * self.fov_y_deg.to_radians()).tan()
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::Config("sensor resolution must be non-zero".into()));
        }
        for (name, fov) in [("fov_x_deg", self.fov_x_deg), ("fov_y_deg", self.fov_y_deg)] {
            if !(fov > 0.0 && fov < 180.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 180), got {fov}")));
            }
        }
        Ok(())
    }
}

/// Planner configuration. A value of zero for `rho`, `r`, `d` or `epsilon`
/// means "derive it"; `k_min` is always derived.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationParams {
    /// Target density, points per m^3.
    pub rho: f64,
    /// Resolution radius, m.
    pub r: f64,
    /// View distance, m.
    pub d: f64,
    /// Minimum point separation, m.
    pub epsilon: f64,
    /// Occlusion search distance, m.
    pub psi: f64,
    /// Visibility search distance, m.
    pub upsilon: f64,
    /// Number of nearby view proposals refined and graphed per iteration.
    pub tau: usize,
    /// Registration radius used by the coverage metric, m.
    pub eta: f64,
    /// Neighbour-count threshold for a core point.
    #[serde(skip_deserializing)]
    pub k_min: usize,
}

impl Default for ObservationParams {
    fn default() -> Self {
        Self::small_model()
    }
}

impl ObservationParams {
    /// Defaults for desk-scale objects, density left to be derived.
    pub fn small_model() -> Self {
        Self {
            rho: 0.0,
            r: 0.03,
            d: 0.5,
            epsilon: 0.0,
            psi: 0.5,
            upsilon: 0.01,
            tau: 100,
            eta: 0.005,
            k_min: 0,
        }
    }

    /// Defaults for building-scale scenes, view distance left to be derived.
    pub fn large_model() -> Self {
        Self {
            rho: 300.0,
            r: 0.15,
            d: 0.0,
            epsilon: 0.06,
            psi: 20.0,
            upsilon: 0.15,
            tau: 100,
            eta: 0.05,
            k_min: 0,
        }
    }

    /// Checks the ordering constraints between fully derived parameters.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let finite = [
            self.rho,
            self.r,
            self.d,
            self.epsilon,
            self.psi,
            self.upsilon,
            self.eta,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("parameters must be finite".into());
        }
        if self.rho <= 0.0 {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        if !(0.0 < self.epsilon && self.epsilon < self.r && self.r < self.psi) {
            return bad(format!(
                "need 0 < epsilon < r < psi, got epsilon={} r={} psi={}",
                self.epsilon, self.r, self.psi
            ));
        }
        if !(0.0 < self.upsilon && self.upsilon <= self.r) {
            return bad(format!(
                "need 0 < upsilon <= r, got upsilon={} r={}",
                self.upsilon, self.r
            ));
        }
        if self.d <= 0.0 {
            return bad(format!("d must be positive, got {}", self.d));
        }
        if self.tau == 0 {
            return bad("tau must be at least 1".into());
        }
        if self.k_min == 0 {
            return bad("k_min must be at least 1".into());
        }
        if self.eta <= 0.0 {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        Ok(())
    }
}

/// Fills unset `r`, `rho`, `d` and `epsilon` from the sensor and recomputes `k_min`.
pub fn derive_params(partial: &ObservationParams, sensor: &SensorIntrinsics) -> Result<ObservationParams> {
    sensor.validate()?;
    let mut p = *partial;
    let wh = sensor.pixel_product();
    let tt = sensor.half_tan_product();

    if p.r == 0.0 && p.rho != 0.0 {
        p.r = (9.0 / (4.0 * PI * p.rho)).cbrt();
    }
    if p.rho == 0.0 && p.d != 0.0 && p.r != 0.0 {
        p.rho = wh / (4.0 * tt * (3.0 * p.d * p.d + 2.0 * p.r * p.r));
    }
    if p.d == 0.0 && p.rho != 0.0 && p.r != 0.0 {
        let radicand = wh / (12.0 * p.rho * tt) - 2.0 * p.r * p.r / 3.0;
        if radicand < 0.0 {
            return Err(Error::Config(format!(
                "no view distance achieves rho={} with r={} on a {}x{} sensor",
                p.rho, p.r, sensor.width_px, sensor.height_px
            )));
        }
        p.d = radicand.sqrt();
    }
    let unset: Vec<&str> = [("rho", p.rho), ("r", p.r), ("d", p.d)]
        .iter()
        .filter(|(_, v)| *v == 0.0)
        .map(|(n, _)| *n)
        .collect();
    if !unset.is_empty() {
        return Err(Error::Config(format!(
            "cannot resolve {} from the given parameters",
            unset.join(", ")
        )));
    }
    if p.epsilon == 0.0 {
        p.epsilon = (3.0 * p.r / (2.0 * PI * p.rho)).cbrt();
    }
    p.k_min = (4.0 / 3.0 * PI * p.rho * p.r.powi(3)).ceil() as usize;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_model_density_matches_hand_evaluation() {
        let p = derive_params(&ObservationParams::small_model(), &SensorIntrinsics::rgbd()).unwrap();
        let tx = 35f64.to_radians().tan();
        let ty = 21.5f64.to_radians().tan();
        let rho = 848.0 * 480.0 / (4.0 * tx * ty * (3.0 * 0.25 + 2.0 * 0.0009));
        assert!((p.rho - rho).abs() < 1e-9 * rho);
        assert!((p.rho - 490_738.0).abs() / 490_738.0 < 1e-3);
        assert_eq!(p.k_min, 56);
        assert!((p.epsilon - 0.003).abs() / 0.003 < 0.05);
        p.validate().unwrap();
    }

    #[test]
    fn unit_radius_from_matching_density() {
        let partial = ObservationParams {
            rho: 9.0 / (4.0 * PI),
            r: 0.0,
            d: 1.0,
            ..ObservationParams::small_model()
        };
        let p = derive_params(&partial, &SensorIntrinsics::rgbd()).unwrap();
        assert!((p.r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nothing_set_is_a_config_error() {
        let partial = ObservationParams {
            rho: 0.0,
            r: 0.0,
            d: 0.0,
            ..ObservationParams::small_model()
        };
        let err = derive_params(&partial, &SensorIntrinsics::rgbd()).unwrap_err();
        assert!(matches!(err, Error::Config(m) if m.contains("rho")));
    }

    #[test]
    fn impossible_density_is_a_config_error() {
        let partial = ObservationParams {
            rho: 1e12,
            r: 0.5,
            d: 0.0,
            ..ObservationParams::small_model()
        };
        assert!(matches!(
            derive_params(&partial, &SensorIntrinsics::rgbd()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn user_values_are_kept() {
        let partial = ObservationParams {
            rho: 1000.0,
            epsilon: 0.01,
            ..ObservationParams::small_model()
        };
        let p = derive_params(&partial, &SensorIntrinsics::rgbd()).unwrap();
        assert_eq!((p.rho, p.r, p.d, p.epsilon), (1000.0, 0.03, 0.5, 0.01));
    }

    #[test]
    fn toml_round_trip() {
        let text = "r = 0.03\nd = 0.5\npsi = 0.5\nupsilon = 0.01\ntau = 100\neta = 0.005\n";
        let partial: ObservationParams = toml::from_str(text).unwrap();
        assert_eq!(partial.rho, 0.0);
        let p = derive_params(&partial, &SensorIntrinsics::rgbd()).unwrap();
        assert_eq!(p.k_min, 56);
        assert!(toml::from_str::<ObservationParams>("bogus = 1").is_err());
    }

    proptest! {
        #[test]
        fn density_and_distance_round_trip(r in 0.005..0.5f64, d in 0.1..50.0f64) {
            let s = SensorIntrinsics::lidar();
            let base = ObservationParams { rho: 0.0, r, d, epsilon: 0.0, ..ObservationParams::small_model() };
            let forward = derive_params(&base, &s).unwrap();
            let back = derive_params(&ObservationParams { d: 0.0, ..forward }, &s).unwrap();
            prop_assert!((back.d - d).abs() <= 1e-6 * d);
        }

        #[test]
        fn distance_decreases_with_density(r in 0.01..0.2f64, rho in 10.0..1e4f64, f in 1.01..3.0f64) {
            let s = SensorIntrinsics::rgbd();
            let at = |rho: f64| derive_params(&ObservationParams { rho, r, d: 0.0, ..ObservationParams::small_model() }, &s);
            if let (Ok(a), Ok(b)) = (at(rho), at(rho * f)) {
                prop_assert!(b.d < a.d);
            }
        }
    }
}
