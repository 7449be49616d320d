//! Frontier visibility graph and next-best-view selection.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::cloud::{ObservedCloud, PointId};
use crate::geometry::{Point, View};
use crate::params::ObservationParams;
use crate::surface::SurfaceFrame;
use crate::visibility::{is_occluded_from, visibility_offset};

/// Directed graph over (frontier, proposed view) vertices. An edge `a -> b`
/// means frontier `b` is visible from the view proposed for `a`. Vertices are
/// identified by their frontier.
#[derive(Clone, Debug, Default)]
pub struct VisibilityGraph {
    out: BTreeMap<PointId, BTreeSet<PointId>>,
}

impl VisibilityGraph {
    pub fn out_degree(&self, v: PointId) -> usize {
        self.out.get(&v).map_or(0, BTreeSet::len)
    }

    pub fn has_edge(&self, from: PointId, to: PointId) -> bool {
        self.out.get(&from).is_some_and(|s| s.contains(&to))
    }

    pub fn edges_from(&self, v: PointId) -> impl Iterator<Item = PointId> + '_ {
        self.out.get(&v).into_iter().flatten().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.out.values().map(BTreeSet::len).sum()
    }

    pub fn set_edges(&mut self, from: PointId, to: BTreeSet<PointId>) {
        self.out.insert(from, to);
    }

    /// Removes a vertex's outgoing edges.
    pub fn clear_from(&mut self, v: PointId) {
        self.out.remove(&v);
    }

    /// Keeps only edges whose endpoints both satisfy `keep`.
    pub fn retain_vertices(&mut self, keep: impl Fn(PointId) -> bool) {
        self.out.retain(|&from, to| {
            if !keep(from) {
                return false;
            }
            to.retain(|&t| keep(t));
            true
        });
    }
}

/// Frontiers of the `k` proposals closest to `p`, nearest first, ties by id.
pub fn nearest_proposals(proposals: &BTreeMap<PointId, View>, p: &Point, k: usize) -> Vec<PointId> {
    let mut all: Vec<(f64, PointId)> = proposals
        .iter()
        .map(|(&f, v)| ((v.position - p).norm_squared(), f))
        .collect();
    let order = |a: &(f64, PointId), b: &(f64, PointId)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if all.len() > k && k > 0 {
        all.select_nth_unstable_by(k - 1, order);
        all.truncate(k);
    }
    all.sort_by(order);
    all.truncate(k);
    all.into_iter().map(|(_, f)| f).collect()
}

/// Refreshes the outgoing edges of the `tau` proposals nearest `current`.
pub fn update_graph(
    graph: &mut VisibilityGraph,
    proposals: &BTreeMap<PointId, View>,
    frames: &BTreeMap<PointId, SurfaceFrame>,
    cloud: &ObservedCloud,
    current: &View,
    params: &ObservationParams,
) {
    let frontiers = cloud.frontiers();
    graph.retain_vertices(|f| frontiers.contains(&f) && proposals.contains_key(&f));

    let sources = nearest_proposals(proposals, &current.position, params.tau);
    let targets: Vec<(PointId, Vec<PointId>)> = sources
        .iter()
        .map(|&f| (f, nearest_proposals(proposals, &proposals[&f].position, params.tau)))
        .collect();

    let mut needed: Vec<PointId> = targets.iter().flat_map(|(_, t)| t.iter().copied()).collect();
    needed.sort_unstable();
    needed.dedup();
    let offsets: FxHashMap<PointId, f64> = needed
        .par_iter()
        .map(|&f| {
            let zeta = visibility_offset(cloud, &cloud.position(f), &frames[&f], params);
            (f, zeta)
        })
        .collect();

    let edges: Vec<(PointId, BTreeSet<PointId>)> = targets
        .par_iter()
        .map(|(fi, near)| {
            let vi = &proposals[fi];
            let visible = near
                .iter()
                .copied()
                .filter(|fj| !is_occluded_from(cloud, vi, &cloud.position(*fj), offsets[fj], params))
                .collect();
            (*fi, visible)
        })
        .collect();
    for (fi, visible) in edges {
        graph.set_edges(fi, visible);
    }
}

/// Picks the next target among the vertices in `proposals`.
///
/// Starts from the vertex whose view is closest to `current`; if vertices that
/// can see it also see more frontiers than it does, the one with the best
/// out-degree per metre of travel is taken instead.
pub fn select_nbv(
    graph: &VisibilityGraph,
    proposals: &BTreeMap<PointId, View>,
    current: &Point,
) -> Option<(PointId, View)> {
    let dist = |f: PointId| (proposals[&f].position - current).norm();
    let nearest = proposals
        .keys()
        .copied()
        .min_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)))?;
    let base = graph.out_degree(nearest);
    let best = proposals
        .keys()
        .copied()
        .filter(|&m| graph.has_edge(m, nearest) && graph.out_degree(m) > base)
        .map(|m| (graph.out_degree(m) as f64 / dist(m), dist(m), m))
        .min_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)))
        .map_or(nearest, |(_, _, m)| m);
    Some((best, proposals[&best]))
}
