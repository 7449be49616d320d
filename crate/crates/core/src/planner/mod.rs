//! The observation loop: propose views of frontiers, keep them unoccluded,
//! link them by shared visibility and pick the next view.

mod adjust;
mod graph;

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::Serialize;

pub use adjust::{adjust_view, correction, separation, AdjustOutcome, AdjustState, Correction};
pub use graph::{nearest_proposals, select_nbv, update_graph, VisibilityGraph};

use crate::classify::{classify_update, ClassificationDelta, DensityState};
use crate::cloud::{ObservedCloud, PointClass, PointId};
use crate::error::Result;
use crate::geometry::{Point, View};
use crate::params::ObservationParams;
use crate::surface::{estimate_surface, CaptureProjection, SurfaceFrame};
use crate::visibility::{is_occluded, optimise_view};

/// View of `frontier` from distance `d` along its normal.
pub fn propose_view(frontier: &Point, frame: &SurfaceFrame, d: f64) -> View {
    View::facing(frontier, -frame.normal, d)
}

/// Anything that can return measurements for a view.
pub trait MeasurementSource {
    fn capture(&mut self, view: &View) -> Vec<Point>;
}

/// Safety limits on a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerCaps {
    pub max_views: usize,
    pub max_adjustments_per_frontier: usize,
}

impl Default for PlannerCaps {
    fn default() -> Self {
        Self {
            max_views: 400,
            max_adjustments_per_frontier: 10,
        }
    }
}

/// What happened to the frontier a view was aimed at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetOutcome {
    /// The view had no target.
    Initial,
    Observed,
    Adjusted,
    Switched,
    Demoted,
}

/// One line of the per-view event log.
#[derive(Clone, Debug, Serialize)]
pub struct ViewRecord {
    pub view_index: usize,
    pub position: [f64; 3],
    pub orientation: [f64; 3],
    pub target: Option<u32>,
    pub outcome: TargetOutcome,
    pub accepted: usize,
    pub points_total: usize,
    pub frontiers: usize,
    pub cum_distance_m: f64,
    pub nbv_time_s: f64,
}

#[derive(Debug)]
pub struct ObservationResult {
    pub cloud: ObservedCloud,
    pub trajectory: Vec<View>,
    pub records: Vec<ViewRecord>,
    pub complete: bool,
    pub remaining_frontiers: usize,
}

/// Proposals, surface frames, visibility graph and adjustment history.
#[derive(Clone, Debug, Default)]
pub struct PlannerState {
    pub proposals: BTreeMap<PointId, View>,
    pub frames: BTreeMap<PointId, SurfaceFrame>,
    pub graph: VisibilityGraph,
    pub adjustments: FxHashMap<PointId, AdjustState>,
    pub target: Option<(PointId, View)>,
}

impl PlannerState {
    /// Drops everything attached to a frontier.
    fn forget(&mut self, f: PointId) {
        self.proposals.remove(&f);
        self.frames.remove(&f);
        self.graph.clear_from(f);
    }

    /// Reclassifies a frontier as an outlier and forgets it.
    pub fn demote(&mut self, cloud: &mut ObservedCloud, f: PointId) {
        cloud.set_class(f, PointClass::Outlier);
        self.forget(f);
    }

    fn replace_proposal(&mut self, f: PointId, view: View) {
        self.proposals.insert(f, view);
        self.graph.clear_from(f);
    }

    /// Drops state for points that stopped being frontiers.
    pub fn sync(&mut self, cloud: &ObservedCloud) {
        let stale: Vec<PointId> = self
            .proposals
            .keys()
            .chain(self.frames.keys())
            .copied()
            .filter(|f| !cloud.frontiers().contains(f))
            .collect();
        for f in stale {
            self.forget(f);
        }
    }

    /// Estimates a frame and proposes a view for every frontier without one.
    /// Frontiers whose neighbourhood is degenerate are demoted.
    pub fn propose_views(
        &mut self,
        cloud: &mut ObservedCloud,
        current: &View,
        projection: &CaptureProjection,
        params: &ObservationParams,
    ) -> Vec<PointId> {
        let pending: Vec<PointId> = cloud
            .frontiers()
            .iter()
            .copied()
            .filter(|f| !self.proposals.contains_key(f))
            .collect();
        let shared: &ObservedCloud = cloud;
        let frames: Vec<(PointId, Result<SurfaceFrame>)> = pending
            .par_iter()
            .map(|&f| {
                let p = shared.position(f);
                (f, estimate_surface(shared, &p, current, projection, params))
            })
            .collect();
        let mut demoted = Vec::new();
        for (f, frame) in frames {
            match frame {
                Ok(frame) => {
                    let p = cloud.position(f);
                    self.frames.insert(f, frame);
                    self.proposals.insert(f, propose_view(&p, &frame, params.d));
                }
                Err(_) => {
                    self.demote(cloud, f);
                    demoted.push(f);
                }
            }
        }
        demoted
    }

    /// Replaces occluded proposals among the `tau` nearest to `current` with
    /// optimised views, demoting frontiers that stay occluded.
    pub fn refine_views(
        &mut self,
        cloud: &mut ObservedCloud,
        current: &View,
        params: &ObservationParams,
    ) -> ClassificationDelta {
        let near = nearest_proposals(&self.proposals, &current.position, params.tau);
        let shared: &ObservedCloud = cloud;
        let proposals = &self.proposals;
        let frames = &self.frames;
        let refined: Vec<(PointId, Option<View>)> = near
            .par_iter()
            .filter_map(|&f| {
                let p = shared.position(f);
                let frame = &frames[&f];
                if !is_occluded(shared, &proposals[&f], &p, frame, params) {
                    return None;
                }
                let v = optimise_view(shared, f, frame, params);
                let blocked = is_occluded(shared, &v, &p, frame, params);
                Some((f, (!blocked).then_some(v)))
            })
            .collect();

        let mut delta = ClassificationDelta::default();
        for (f, view) in refined {
            match view {
                Some(v) => self.replace_proposal(f, v),
                None => {
                    self.demote(cloud, f);
                    delta.removed_frontiers.push(f);
                    delta.newly_outlier.push(f);
                }
            }
        }
        delta
    }

    pub fn update_graph(&mut self, cloud: &ObservedCloud, current: &View, params: &ObservationParams) {
        update_graph(&mut self.graph, &self.proposals, &self.frames, cloud, current, params);
    }

    /// Chooses and records the next target, `None` once no proposals remain.
    pub fn select_nbv(&mut self, current: &View) -> Option<(PointId, View)> {
        self.target = select_nbv(&self.graph, &self.proposals, &current.position);
        self.target
    }
}

/// Drives the observation loop one capture at a time.
#[derive(Debug)]
pub struct Planner {
    params: ObservationParams,
    caps: PlannerCaps,
    cloud: ObservedCloud,
    density: DensityState,
    state: PlannerState,
    last_position: Option<Point>,
    travelled: f64,
    views: usize,
}

impl Planner {
    pub fn new(params: ObservationParams, caps: PlannerCaps) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            cloud: ObservedCloud::new(params.epsilon, 0.5 * params.r),
            density: DensityState::new(params.r, params.k_min),
            params,
            caps,
            state: PlannerState::default(),
            last_position: None,
            travelled: 0.0,
            views: 0,
        })
    }

    pub fn params(&self) -> &ObservationParams {
        &self.params
    }

    pub fn cloud(&self) -> &ObservedCloud {
        &self.cloud
    }

    pub fn state(&self) -> &PlannerState {
        &self.state
    }

    pub fn into_cloud(self) -> ObservedCloud {
        self.cloud
    }

    /// Folds in the measurements captured from `view` and plans the next view.
    /// Returns the record for this view and the next view, if any frontier remains.
    pub fn step(&mut self, view: &View, points: &[Point]) -> (ViewRecord, Option<View>) {
        let started = Instant::now();
        if let Some(last) = self.last_position {
            self.travelled += (view.position - last).norm();
        }
        self.last_position = Some(view.position);
        let index = self.views;
        self.views += 1;

        let projection = CaptureProjection::new(view, points);
        let delta = classify_update(&mut self.cloud, &mut self.density, points, view);
        self.state.sync(&self.cloud);

        let target = self.state.target.take();
        let outcome = match target {
            None => TargetOutcome::Initial,
            Some((f, _)) if self.cloud.class_of(f) != PointClass::Frontier => TargetOutcome::Observed,
            Some((f, _)) => self.adjust(f, view, &delta),
        };

        self.state
            .propose_views(&mut self.cloud, view, &projection, &self.params);
        self.state.refine_views(&mut self.cloud, view, &self.params);
        self.state.update_graph(&self.cloud, view, &self.params);
        let next = self.state.select_nbv(view).map(|(_, v)| v);

        let o = view.orientation;
        let record = ViewRecord {
            view_index: index,
            position: [view.position.x, view.position.y, view.position.z],
            orientation: [o.x, o.y, o.z],
            target: target.map(|(f, _)| f.0),
            outcome,
            accepted: delta.accepted.len(),
            points_total: self.cloud.len(),
            frontiers: self.cloud.frontiers().len(),
            cum_distance_m: self.travelled,
            nbv_time_s: started.elapsed().as_secs_f64(),
        };
        (record, next)
    }

    fn adjust(&mut self, f: PointId, view: &View, delta: &ClassificationDelta) -> TargetOutcome {
        let entry = self.state.adjustments.entry(f).or_default();
        entry.attempts += 1;
        let frame = self.state.frames.get(&f).copied();
        let (Some(frame), true) = (frame, entry.attempts <= self.caps.max_adjustments_per_frontier) else {
            self.state.demote(&mut self.cloud, f);
            return TargetOutcome::Demoted;
        };
        let mean = (!delta.accepted.is_empty()).then(|| {
            let sum = delta
                .accepted
                .iter()
                .fold(Point::origin().coords, |acc, &id| acc + self.cloud.position(id).coords);
            Point::from(sum / delta.accepted.len() as f64)
        });
        let p = self.cloud.position(f);
        let capture = self.cloud.capture_position(f);
        match adjust_view(entry, &p, &frame, view, mean.as_ref(), &capture, self.params.d) {
            AdjustOutcome::Adjusted(v) => {
                self.state.replace_proposal(f, v);
                TargetOutcome::Adjusted
            }
            AdjustOutcome::Switched(v) => {
                self.state.replace_proposal(f, v);
                TargetOutcome::Switched
            }
            AdjustOutcome::Demoted => {
                self.state.demote(&mut self.cloud, f);
                TargetOutcome::Demoted
            }
        }
    }

    /// Runs captures from `start` until no frontier remains or a cap is hit.
    /// `on_view` sees each record together with the cloud after that capture.
    pub fn run<S, F>(mut self, source: &mut S, start: View, mut on_view: F) -> ObservationResult
    where
        S: MeasurementSource + ?Sized,
        F: FnMut(&ViewRecord, &ObservedCloud),
    {
        let mut trajectory = Vec::new();
        let mut records = Vec::new();
        let mut view = start;
        let mut complete = false;
        while trajectory.len() < self.caps.max_views {
            let points = source.capture(&view);
            let (record, next) = self.step(&view, &points);
            log::debug!(
                "view {} {:?}: {} points, {} frontiers",
                record.view_index,
                record.outcome,
                record.points_total,
                record.frontiers
            );
            on_view(&record, &self.cloud);
            trajectory.push(view);
            records.push(record);
            match next {
                Some(v) => view = v,
                None => {
                    complete = true;
                    break;
                }
            }
        }
        let remaining_frontiers = self.cloud.frontiers().len();
        ObservationResult {
            cloud: self.cloud,
            trajectory,
            records,
            complete: complete && remaining_frontiers == 0,
            remaining_frontiers,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vector;

    #[test]
    fn proposal_examples() {
        let frame = SurfaceFrame::new(Vector::z_axis(), Vector::x_axis());
        let v = propose_view(&Point::origin(), &frame, 0.5);
        assert_eq!(v.position, Point::new(0.0, 0.0, 0.5));
        assert_eq!(v.orientation.into_inner(), Vector::new(0.0, 0.0, -1.0));

        let frame = SurfaceFrame::new(Vector::x_axis(), Vector::y_axis());
        let v = propose_view(&Point::new(1.0, 2.0, 3.0), &frame, 2.0);
        assert_eq!(v.position, Point::new(3.0, 2.0, 3.0));
        assert_eq!(v.orientation.into_inner(), Vector::new(-1.0, 0.0, 0.0));
    }

    struct Nothing;

    impl MeasurementSource for Nothing {
        fn capture(&mut self, _: &View) -> Vec<Point> {
            Vec::new()
        }
    }

    #[test]
    fn empty_scene_completes_after_one_view() {
        let params = crate::params::derive_params(
            &ObservationParams::small_model(),
            &crate::params::SensorIntrinsics::rgbd(),
        )
        .unwrap();
        let planner = Planner::new(params, PlannerCaps::default()).unwrap();
        let start = View::new(Point::new(0.0, 0.0, 1.0), -Vector::z_axis());
        let result = planner.run(&mut Nothing, start, |_, _| {});
        assert!(result.complete);
        assert_eq!(result.trajectory.len(), 1);
        assert_eq!(result.records[0].outcome, TargetOutcome::Initial);
    }
}
