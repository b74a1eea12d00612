//! Temporal aggregation of non-ground points and HDBSCAN object proposals.

mod hdbscan;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ground_removal::NonGroundCloud;

pub use hdbscan::{
    condensed_tree, core_distances, hdbscan, lambda_of, mutual_reachability_mst, CondensedCluster,
    CondensedTree, HdbscanParams, HdbscanResult, MstEdge, MIN_MERGE_DISTANCE,
};

/// Non-ground points of a temporal window, in the world frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AggregatedCloud {
    pub points: Vec<[f64; 3]>,
    /// Sequence position of each point's source frame.
    pub source_frame: Vec<usize>,
    /// Index of each point in its source cloud.
    pub source_point: Vec<u32>,
    /// Sequence position of the window's center frame.
    pub center_frame: usize,
}

impl AggregatedCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distinct source frames, ascending.
    pub fn frames(&self) -> Vec<usize> {
        let mut f = self.source_frame.clone();
        f.sort_unstable();
        f.dedup();
        f
    }
}

/// Sequence positions within `M` steps of the `t`-th entry of `order`,
/// clipped to the ends of `order`.
pub fn window(order: &[usize], t: usize, m: usize) -> &[usize] {
    if order.is_empty() {
        return order;
    }
    let lo = t.saturating_sub(m);
    let hi = (t + m).min(order.len() - 1);
    &order[lo..=hi]
}

/// Aggregates the non-ground points of the window around `order[t]`.
///
/// `world_points[f]` holds frame `f`'s sweep in world coordinates and
/// `non_ground[f]` its non-ground indices. `order` lists the sequence
/// positions eligible for aggregation (keyframes, or every sweep); `t` is an
/// index into `order`.
pub fn aggregate(
    world_points: &[Vec<[f64; 3]>],
    non_ground: &[NonGroundCloud],
    order: &[usize],
    t: usize,
    m: usize,
) -> AggregatedCloud {
    let mut agg = AggregatedCloud {
        center_frame: order.get(t).copied().unwrap_or(0),
        ..Default::default()
    };
    for &f in window(order, t, m) {
        for &i in &non_ground[f].indices {
            agg.points.push(world_points[f][i as usize]);
            agg.source_frame.push(f);
            agg.source_point.push(i);
        }
    }
    agg
}

/// A spatial cluster of aggregated points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectProposal {
    pub id: usize,
    pub center_frame: usize,
    /// Indices into the window's [`AggregatedCloud`], ascending.
    pub point_indices: Vec<usize>,
    /// Source frame → indices into the aggregated cloud. Partitions `point_indices`.
    pub slices: BTreeMap<usize, Vec<usize>>,
}

impl ObjectProposal {
    pub fn frame_span(&self) -> Vec<usize> {
        self.slices.keys().copied().collect()
    }

    pub fn points<'a>(&'a self, agg: &'a AggregatedCloud) -> impl Iterator<Item = [f64; 3]> + 'a {
        self.point_indices.iter().map(move |&i| agg.points[i])
    }
}

/// One proposal per cluster, ids starting at `first_id`.
pub fn build_proposals(
    agg: &AggregatedCloud,
    clusters: &[Vec<usize>],
    first_id: usize,
) -> Vec<ObjectProposal> {
    clusters
        .iter()
        .enumerate()
        .map(|(k, members)| {
            let mut point_indices = members.clone();
            point_indices.sort_unstable();
            let mut slices: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for &i in &point_indices {
                slices.entry(agg.source_frame[i]).or_default().push(i);
            }
            ObjectProposal {
                id: first_id + k,
                center_frame: agg.center_frame,
                point_indices,
                slices,
            }
        })
        .collect()
}
