//! Next-best-view planning for unstructured scenes.
//!
//! Measurements are folded into an [`ObservedCloud`] whose points are labelled
//! core, frontier or outlier by a local density test. Frontier points mark the
//! boundary between sufficiently and insufficiently observed surface, and the
//! [`planner`] proposes views that look squarely at them, refining views that
//! are blocked by other observed points.
//!
//! The [`sim`] module provides a ray-cast depth sensor over triangle meshes and
//! an experiment harness that records coverage, travel distance and timing.

pub mod classify;
pub mod cloud;
pub mod error;
pub mod geometry;
pub mod index;
pub mod params;
pub mod planner;
pub mod sim;
pub mod surface;
pub mod visibility;

pub use classify::{classify_update, ClassificationDelta, DensityState};
pub use cloud::{ObservedCloud, PointClass, PointId};
pub use error::{Error, Result};
pub use geometry::{Aabb, Point, UnitVector, Vector, View};
pub use params::{derive_params, ObservationParams, SensorIntrinsics};
pub use planner::{MeasurementSource, ObservationResult, Planner, PlannerCaps, TargetOutcome};
pub use surface::{direct_normal, estimate_surface, SurfaceFrame};
pub use visibility::{
    is_occluded, optimise_view, solve_min_cap, visibility_offset, CapMode, SphericalCapSolution,
};
