//! Simulation harness: scene meshes, a ray-cast depth sensor, coverage
//! metrics and seeded experiment runs.

pub mod bvh;
pub mod experiment;
pub mod mesh;
pub mod metrics;
pub mod ply;
pub mod plot;
pub mod sensor;

pub use bvh::{Bvh, Hit};
pub use experiment::{run_experiment, Experiment, ExperimentConfig, ExperimentSummary, TrialResult, ViewMetrics};
pub use mesh::{load_mesh, SceneMesh};
pub use metrics::{coverage, CoverageTracker};
pub use sensor::{Scene, SimSensor, SimulatedCamera};
