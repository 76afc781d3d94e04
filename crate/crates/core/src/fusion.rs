//! Ensemble fusion: per image and per class, cluster boxes whose pairwise
//! overlap exceeds a threshold, filter by confidence, and emit one
//! representative per cluster.
//!
//! Clusters are the connected components of the graph whose edges join
//! detection pairs with `metric(a, b) > overlap_threshold` (strict). The
//! transitive closure means a chain of pairwise-overlapping boxes fuses
//! into one cluster even when its endpoints barely overlap. This is a
//! deliberate departure from greedy NMS-style suppression: it makes the
//! pipeline idempotent under max-confidence selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detections::{merge_sets, Detection, MergeError, PredictionSet};
use crate::geometry::BBox;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Merge(#[from] MergeError),
}

/// Pairwise overlap measure used for clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapMetric {
    Iou,
    Giou,
}

impl OverlapMetric {
    /// Legal threshold range for this metric.
    pub fn threshold_range(self) -> (f64, f64) {
        match self {
            OverlapMetric::Iou => (0.0, 1.0),
            OverlapMetric::Giou => (-1.0, 1.0),
        }
    }

    /// The pairwise value, or `None` where the metric is undefined
    /// (GIoU on two zero-area boxes); an undefined pair contributes no
    /// clustering edge.
    fn pair(self, a: &BBox, b: &BBox) -> Option<f64> {
        match self {
            OverlapMetric::Iou => Some(a.iou(b)),
            OverlapMetric::Giou => a.giou(b).ok(),
        }
    }
}

/// How the single output box of a cluster is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selection {
    /// The member with the highest confidence score, unchanged.
    #[serde(rename = "max")]
    MaxConfidence,
    /// A synthesized box: score-weighted mean of member corners, with the
    /// maximum member score. Extension beyond max-confidence selection;
    /// opt-in.
    #[serde(rename = "wavg")]
    WeightedAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub metric: OverlapMetric,
    /// Edge rule: pairs with `metric > overlap_threshold` cluster together.
    pub overlap_threshold: f64,
    /// Detections with `score < min_score` are dropped before clustering.
    pub min_score: f64,
    pub selection: Selection,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            metric: OverlapMetric::Giou,
            overlap_threshold: 0.5,
            min_score: 0.05,
            selection: Selection::MaxConfidence,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let (lo, hi) = self.metric.threshold_range();
        let in_range = match self.metric {
            OverlapMetric::Iou => (lo..=hi).contains(&self.overlap_threshold),
            // GIoU range is half-open: -1 itself is unreachable
            OverlapMetric::Giou => self.overlap_threshold > lo && self.overlap_threshold <= hi,
        };
        if !self.overlap_threshold.is_finite() || !in_range {
            return Err(FusionError::InvalidConfig(format!(
                "overlap_threshold {} outside the {:?} metric range ({lo}, {hi}]",
                self.overlap_threshold, self.metric
            )));
        }
        if !self.min_score.is_finite() || !(0.0..=1.0).contains(&self.min_score) {
            return Err(FusionError::InvalidConfig(format!(
                "min_score {} outside [0, 1]",
                self.min_score
            )));
        }
        Ok(())
    }
}

/// One group of mutually reachable detections and its elected output box.
#[derive(Debug, Clone)]
pub struct Cluster {
    /// Members in input order; all share `(image_id, category_id)`.
    pub members: Vec<Detection>,
    pub representative: Detection,
}

/// Drops detections scoring below `min_score` (keep rule: `score >= min_score`).
pub fn prefilter(set: &PredictionSet, min_score: f64) -> PredictionSet {
    let kept: Vec<Detection> = set
        .detections()
        .iter()
        .filter(|d| d.score >= min_score)
        .cloned()
        .collect();
    PredictionSet::new(set.source_label(), set.categories().clone(), kept)
        .expect("filtering preserves validity")
}

/// Partitions one `(image, category)` group into clusters.
///
/// All detections must share `image_id` and `category_id`. Returned
/// clusters are ordered by descending representative score, ties broken by
/// ascending representative area and then input order.
pub fn build_clusters(group: &[Detection], config: &FusionConfig) -> Vec<Cluster> {
    debug_assert!(group
        .windows(2)
        .all(|w| w[0].image_id == w[1].image_id && w[0].category_id == w[1].category_id));

    let n = group.len();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let joined = config
                .metric
                .pair(&group[i].bbox, &group[j].bbox)
                .is_some_and(|m| m > config.overlap_threshold);
            if joined {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
    }

    // connected components by traversal, seeded in input order
    let mut component = vec![usize::MAX; n];
    let mut order_of_first = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..n {
        if component[seed] != usize::MAX {
            continue;
        }
        let id = order_of_first.len();
        order_of_first.push(seed);
        component[seed] = id;
        stack.push(seed);
        while let Some(node) = stack.pop() {
            for &next in &adjacency[node] {
                if component[next] == usize::MAX {
                    component[next] = id;
                    stack.push(next);
                }
            }
        }
    }

    let mut members: Vec<Vec<Detection>> = vec![Vec::new(); order_of_first.len()];
    for (idx, det) in group.iter().enumerate() {
        members[component[idx]].push(det.clone());
    }

    let mut clusters: Vec<(usize, Cluster)> = members
        .into_iter()
        .zip(order_of_first)
        .map(|(members, first)| {
            let representative = select_representative(&members, config);
            (first, Cluster {
                members,
                representative,
            })
        })
        .collect();

    clusters.sort_by(|(fa, a), (fb, b)| {
        b.representative
            .score
            .total_cmp(&a.representative.score)
            .then(a.representative.bbox.area().total_cmp(&b.representative.bbox.area()))
            .then(fa.cmp(fb))
    });
    clusters.into_iter().map(|(_, c)| c).collect()
}

/// Elects the output box for a cluster.
///
/// Max-confidence selection returns the highest-scoring member unchanged
/// (ties: larger area, then earlier input order). Weighted-average
/// selection synthesizes a box from the score-weighted mean of member
/// corners and carries the maximum member score.
pub fn select_representative(members: &[Detection], config: &FusionConfig) -> Detection {
    assert!(!members.is_empty(), "cluster members must be non-empty");
    match config.selection {
        Selection::MaxConfidence => {
            let mut best = &members[0];
            for det in &members[1..] {
                let better = det.score > best.score
                    || (det.score == best.score && det.bbox.area() > best.bbox.area());
                if better {
                    best = det;
                }
            }
            best.clone()
        }
        Selection::WeightedAverage => {
            let total: f64 = members.iter().map(|d| d.score).sum();
            let weight = |d: &Detection| {
                // all-zero scores degrade to an unweighted mean
                if total > 0.0 {
                    d.score / total
                } else {
                    1.0 / members.len() as f64
                }
            };
            let mut corners = [0.0f64; 4];
            let mut score: f64 = 0.0;
            for det in members {
                let w = weight(det);
                corners[0] += det.bbox.x_min() * w;
                corners[1] += det.bbox.y_min() * w;
                corners[2] += det.bbox.x_max() * w;
                corners[3] += det.bbox.y_max() * w;
                score = score.max(det.score);
            }
            Detection {
                image_id: members[0].image_id.clone(),
                category_id: members[0].category_id,
                bbox: BBox::new(corners[0], corners[1], corners[2], corners[3])
                    .expect("weighted mean of valid boxes is valid"),
                score,
            }
        }
    }
}

/// The full fusion pipeline: merge the input sets, drop low-confidence
/// detections, cluster each `(image, category)` group, and keep one
/// representative per cluster.
///
/// Output detections are ordered by `(image_id, category_id)` and, within
/// a group, by descending score. Groups are processed in parallel; the
/// result is identical to sequential execution.
pub fn fuse(sets: &[PredictionSet], config: &FusionConfig) -> Result<PredictionSet, FusionError> {
    config.validate()?;
    let merged = merge_sets(sets)?;
    let filtered = prefilter(&merged, config.min_score);

    let groups: Vec<Vec<Detection>> = filtered
        .groups()
        .map(|(_, idxs)| idxs.iter().map(|&i| filtered.detections()[i].clone()).collect())
        .collect();

    let fused: Vec<Detection> = groups
        .par_iter()
        .map(|group| {
            build_clusters(group, config)
                .into_iter()
                .map(|c| c.representative)
                .collect::<Vec<_>>()
        })
        .flatten_iter()
        .collect();

    let label = format!("fusion({})", merged.source_label());
    Ok(PredictionSet::new(label, merged.categories().clone(), fused)
        .expect("representatives come from validated detections"))
}
