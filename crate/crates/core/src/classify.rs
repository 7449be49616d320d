//! Incremental core/frontier/outlier classification.
//!
//! A point is core when its closed `r`-ball holds at least `k_min` stored
//! points (itself included), frontier when it is not core but has a core point
//! in that ball, and an outlier otherwise. Insertions only ever add neighbours,
//! so core status is permanent and only points near new measurements need
//! revisiting. Ball populations and core-neighbour counts are kept per point so
//! each revisit costs O(1) instead of a radius query.

use std::collections::VecDeque;

use crate::cloud::{ObservedCloud, PointClass, PointId};
use crate::geometry::{Point, View};

/// Per-point neighbourhood counters that back [`classify_update`].
#[derive(Clone, Debug)]
pub struct DensityState {
    r: f64,
    k_min: usize,
    neighbours: Vec<u32>,
    core_neighbours: Vec<u32>,
}

impl DensityState {
    pub fn new(r: f64, k_min: usize) -> Self {
        Self {
            r,
            k_min,
            neighbours: Vec::new(),
            core_neighbours: Vec::new(),
        }
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn k_min(&self) -> usize {
        self.k_min
    }

    /// Number of stored points within `r` of `id`, itself included.
    pub fn neighbour_count(&self, id: PointId) -> usize {
        self.neighbours[id.index()] as usize
    }

    /// Number of core points within `r` of `id`, excluding `id`.
    pub fn core_neighbour_count(&self, id: PointId) -> usize {
        self.core_neighbours[id.index()] as usize
    }
}

/// Class changes produced by one capture. All lists are ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClassificationDelta {
    /// Points that passed the separation filter.
    pub accepted: Vec<PointId>,
    pub newly_core: Vec<PointId>,
    pub newly_frontier: Vec<PointId>,
    pub newly_outlier: Vec<PointId>,
    /// Points that were frontiers before this update and no longer are.
    pub removed_frontiers: Vec<PointId>,
}

/// Inserts `new_points` captured from `capture` and updates every affected label.
pub fn classify_update(
    cloud: &mut ObservedCloud,
    state: &mut DensityState,
    new_points: &[Point],
    capture: &View,
) -> ClassificationDelta {
    let first_new = cloud.len();
    let accepted = cloud.insert_filtered(new_points, capture);
    let n = cloud.len();
    state.neighbours.resize(n, 0);
    state.core_neighbours.resize(n, 0);

    // Previous label of every point whose neighbourhood changed; `None` for new points.
    let mut before: Vec<(PointId, Option<PointClass>)> = Vec::new();
    let mut touched = vec![false; n];
    let r = state.r;

    for &p in &accepted {
        let pos = cloud.position(p);
        let mut count = 0u32;
        let mut core = 0u32;
        cloud.visit_within(&pos, r, |q, _| {
            count += 1;
            if q.index() < first_new {
                state.neighbours[q.index()] += 1;
                if cloud.class_of(q) == PointClass::Core {
                    core += 1;
                } else if !touched[q.index()] {
                    touched[q.index()] = true;
                    before.push((q, Some(cloud.class_of(q))));
                }
            }
            true
        });
        state.neighbours[p.index()] = count;
        state.core_neighbours[p.index()] = core;
        touched[p.index()] = true;
    }
    before.sort_unstable_by_key(|(id, _)| *id);
    before.extend(accepted.iter().map(|&p| (p, None)));

    let mut pending = vec![false; n];
    let mut queue: VecDeque<PointId> = VecDeque::with_capacity(before.len());
    for &(id, _) in &before {
        pending[id.index()] = true;
        queue.push_back(id);
    }

    let k_min = state.k_min as u32;
    while let Some(q) = queue.pop_front() {
        pending[q.index()] = false;
        if cloud.class_of(q) == PointClass::Core {
            continue;
        }
        if state.neighbours[q.index()] >= k_min {
            cloud.set_class(q, PointClass::Core);
            let pos = cloud.position(q);
            let mut promoted_neighbours = Vec::new();
            cloud.visit_within(&pos, r, |x, _| {
                if x != q {
                    promoted_neighbours.push(x);
                }
                true
            });
            promoted_neighbours.sort_unstable();
            for x in promoted_neighbours {
                state.core_neighbours[x.index()] += 1;
                if cloud.class_of(x) == PointClass::Core {
                    continue;
                }
                if !touched[x.index()] {
                    touched[x.index()] = true;
                    before.push((x, Some(cloud.class_of(x))));
                }
                if !pending[x.index()] {
                    pending[x.index()] = true;
                    queue.push_back(x);
                }
            }
        } else if state.core_neighbours[q.index()] > 0 {
            cloud.set_class(q, PointClass::Frontier);
        } else {
            cloud.set_class(q, PointClass::Outlier);
        }
    }

    let mut delta = ClassificationDelta {
        accepted,
        ..Default::default()
    };
    for (id, old) in before {
        let now = cloud.class_of(id);
        if old == Some(now) {
            continue;
        }
        if old == Some(PointClass::Frontier) {
            delta.removed_frontiers.push(id);
        }
        match now {
            PointClass::Core => delta.newly_core.push(id),
            PointClass::Frontier => delta.newly_frontier.push(id),
            PointClass::Outlier => delta.newly_outlier.push(id),
        }
    }
    for list in [
        &mut delta.newly_core,
        &mut delta.newly_frontier,
        &mut delta.newly_outlier,
        &mut delta.removed_frontiers,
    ] {
        list.sort_unstable();
    }
    delta
}
