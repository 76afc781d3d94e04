//! COCO-style mean-average-precision evaluation.
//!
//! Protocol: greedy score-ordered matching per image and category (each
//! prediction takes the unmatched ground-truth box of highest IoU at or
//! above the threshold), detections pooled across images into one
//! precision/recall curve per (category, threshold), interpolated AP on a
//! fixed recall grid, and the overall mAP as the mean over classes and
//! thresholds. Classes without ground-truth annotations are excluded from
//! the mean. Defaults follow the common convention: thresholds
//! 0.50:0.05:0.95, 101 recall points, at most 100 detections per image.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::detections::{CategoryId, Detection, GroundTruth, ImageId, PredictionSet};
use crate::geometry::BBox;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid eval config: {0}")]
    InvalidConfig(String),
    #[error("predictions use categories absent from the ground truth: {0:?}")]
    CategoryMismatch(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Strictly increasing IoU thresholds in `(0, 1]`.
    pub iou_thresholds: Vec<f64>,
    /// Number of evenly spaced recall points for AP interpolation.
    pub recall_points: usize,
    /// Per-image cap on scored detections, highest scores first.
    pub max_detections_per_image: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect(),
            recall_points: 101,
            max_detections_per_image: 100,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.iou_thresholds.is_empty() {
            return Err(EvalError::InvalidConfig("no IoU thresholds".into()));
        }
        for pair in self.iou_thresholds.windows(2) {
            if pair[0] >= pair[1] {
                return Err(EvalError::InvalidConfig(format!(
                    "thresholds must be strictly increasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        for &t in &self.iou_thresholds {
            if !t.is_finite() || t <= 0.0 || t > 1.0 {
                return Err(EvalError::InvalidConfig(format!(
                    "threshold {t} outside (0, 1]"
                )));
            }
        }
        if self.recall_points < 2 {
            return Err(EvalError::InvalidConfig(format!(
                "recall_points must be at least 2, got {}",
                self.recall_points
            )));
        }
        if self.max_detections_per_image == 0 {
            return Err(EvalError::InvalidConfig(
                "max_detections_per_image must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// TP/FP/FN totals for one (category, threshold) pair at the final
/// operating point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Per-class AP at each threshold plus the aggregate mAP.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub iou_thresholds: Vec<f64>,
    /// AP per category, aligned with `iou_thresholds`. Only categories with
    /// at least one ground-truth annotation appear.
    pub per_class_ap: BTreeMap<CategoryId, Vec<f64>>,
    pub counts: BTreeMap<CategoryId, Vec<MatchCounts>>,
    /// Mean of `per_class_ap` over classes and thresholds.
    pub map_overall: f64,
}

impl EvalReport {
    /// The report as `{"map": .., "per_class": {cat: {"0.50": ap, ..}}, "counts": ..}`.
    pub fn to_json(&self) -> Value {
        let thr_key = |t: f64| format!("{t:.2}");
        let per_class: BTreeMap<String, Value> = self
            .per_class_ap
            .iter()
            .map(|(cat, aps)| {
                let by_thr: BTreeMap<String, f64> = self
                    .iou_thresholds
                    .iter()
                    .zip(aps)
                    .map(|(&t, &ap)| (thr_key(t), ap))
                    .collect();
                (cat.to_string(), json!(by_thr))
            })
            .collect();
        let counts: BTreeMap<String, Value> = self
            .counts
            .iter()
            .map(|(cat, rows)| {
                let by_thr: BTreeMap<String, Value> = self
                    .iou_thresholds
                    .iter()
                    .zip(rows)
                    .map(|(&t, c)| {
                        (
                            thr_key(t),
                            json!({
                                "tp": c.true_positives,
                                "fp": c.false_positives,
                                "fn": c.false_negatives,
                            }),
                        )
                    })
                    .collect();
                (cat.to_string(), json!(by_thr))
            })
            .collect();
        json!({
            "map": self.map_overall,
            "per_class": per_class,
            "counts": counts,
        })
    }

    /// Aligned text table: one row per class with AP at each threshold and
    /// the class mean, then the overall mAP.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<10}", "category"));
        for t in &self.iou_thresholds {
            out.push_str(&format!(" {:>6}", format!("{t:.2}")));
        }
        out.push_str(&format!(" {:>6}\n", "mean"));
        for (cat, aps) in &self.per_class_ap {
            out.push_str(&format!("{:<10}", cat.to_string()));
            for ap in aps {
                out.push_str(&format!(" {ap:>6.3}"));
            }
            let mean = aps.iter().sum::<f64>() / aps.len() as f64;
            out.push_str(&format!(" {mean:>6.3}\n"));
        }
        out.push_str(&format!("mAP {:.3}\n", self.map_overall));
        out
    }
}

/// Greedy score-ordered matching of one `(image, category)` group against
/// its ground-truth boxes: each prediction takes the unmatched GT with the
/// highest IoU at or above `iou_threshold`; each GT matches at most once.
///
/// `preds` must already be sorted by descending score (ties in input
/// order). Returns one matched flag per prediction, in input order.
pub fn match_detections(preds: &[Detection], gts: &[BBox], iou_threshold: f64) -> Vec<bool> {
    debug_assert!(preds.windows(2).all(|w| w[0].score >= w[1].score));
    let boxes: Vec<BBox> = preds.iter().map(|d| d.bbox).collect();
    match_boxes(&boxes, gts, iou_threshold)
}

fn match_boxes(pred_boxes: &[BBox], gts: &[BBox], iou_threshold: f64) -> Vec<bool> {
    let mut gt_used = vec![false; gts.len()];
    pred_boxes
        .iter()
        .map(|pred| {
            let mut best: Option<(usize, f64)> = None;
            for (gi, gt) in gts.iter().enumerate() {
                if gt_used[gi] {
                    continue;
                }
                let iou = pred.iou(gt);
                if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((gi, iou));
                }
            }
            match best {
                Some((gi, _)) => {
                    gt_used[gi] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// One point of a precision/recall curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Pools `(score, matched)` results across images for one
/// (category, threshold) pair into a PR curve. Detections are sorted by
/// descending score (stable, so ties keep input order) and counted
/// cumulatively. Empty when `total_gt` is zero.
pub fn precision_recall(matches: &[(f64, bool)], total_gt: usize) -> Vec<PrPoint> {
    if total_gt == 0 {
        return Vec::new();
    }
    let mut ordered: Vec<&(f64, bool)> = matches.iter().collect();
    ordered.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut curve = Vec::with_capacity(ordered.len());
    let mut tp = 0usize;
    let mut fp = 0usize;
    for (_, matched) in ordered {
        if *matched {
            tp += 1;
        } else {
            fp += 1;
        }
        curve.push(PrPoint {
            recall: tp as f64 / total_gt as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    curve
}

/// Interpolated AP: the mean over `recall_points` evenly spaced recall
/// values of `max{precision at recall >= r}` (0 where the curve never
/// reaches `r`). The curve's recall must be non-decreasing, as produced by
/// [`precision_recall`]. An empty curve scores 0.
pub fn average_precision(curve: &[PrPoint], recall_points: usize) -> f64 {
    if curve.is_empty() {
        return 0.0;
    }
    debug_assert!(curve.windows(2).all(|w| w[0].recall <= w[1].recall));

    // best precision at or beyond each curve point
    let mut envelope = vec![0.0f64; curve.len()];
    let mut best: f64 = 0.0;
    for (i, point) in curve.iter().enumerate().rev() {
        best = best.max(point.precision);
        envelope[i] = best;
    }

    let n = recall_points;
    let mut sum = 0.0;
    for i in 0..n {
        let r = i as f64 / (n - 1) as f64;
        let idx = curve.partition_point(|p| p.recall < r);
        if idx < curve.len() {
            sum += envelope[idx];
        }
    }
    sum / n as f64
}

/// Scores a prediction set against ground truth.
///
/// Predictions for images absent from the ground truth are ignored with a
/// warning; prediction categories must be a subset of the ground-truth
/// categories. Per image, only the `max_detections_per_image` highest
/// scoring detections are considered.
pub fn evaluate(
    preds: &PredictionSet,
    gt: &GroundTruth,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    config.validate()?;
    let gt_cats = gt.category_ids();
    let extra: Vec<u32> = preds
        .categories()
        .difference(&gt_cats)
        .map(|c| c.0)
        .collect();
    if !extra.is_empty() {
        return Err(EvalError::CategoryMismatch(extra));
    }

    // per-image top-K by score, ties by input order
    let mut per_image: BTreeMap<&ImageId, Vec<usize>> = BTreeMap::new();
    let mut unknown_images = 0usize;
    for (idx, det) in preds.detections().iter().enumerate() {
        if gt.images().contains_key(&det.image_id) {
            per_image.entry(&det.image_id).or_default().push(idx);
        } else {
            unknown_images += 1;
        }
    }
    if unknown_images > 0 {
        log::warn!("{unknown_images} detections reference images absent from the ground truth; ignored");
    }
    let all = preds.detections();
    let mut kept_by_group: BTreeMap<(&ImageId, CategoryId), Vec<usize>> = BTreeMap::new();
    for (image, mut indices) in per_image {
        indices.sort_by(|&a, &b| all[b].score.total_cmp(&all[a].score).then(a.cmp(&b)));
        indices.truncate(config.max_detections_per_image);
        // per-category lists inherit the score-descending order
        for idx in indices {
            kept_by_group
                .entry((image, all[idx].category_id))
                .or_default()
                .push(idx);
        }
    }

    let images: Vec<&ImageId> = gt.images().keys().collect();
    let categories: Vec<CategoryId> = gt_cats.iter().copied().collect();

    struct CategoryResult {
        category: CategoryId,
        total_gt: usize,
        aps: Vec<f64>,
        counts: Vec<MatchCounts>,
    }

    let results: Vec<CategoryResult> = categories
        .par_iter()
        .map(|&category| {
            // (boxes sorted by score, global input indices, gt boxes) per image
            let mut groups: Vec<(Vec<BBox>, Vec<usize>, Vec<BBox>)> = Vec::new();
            let mut total_gt = 0usize;
            for &image in &images {
                let gts: Vec<BBox> = gt
                    .group(image, category)
                    .iter()
                    .map(|&i| gt.annotations()[i].bbox)
                    .collect();
                total_gt += gts.len();
                let indices = kept_by_group
                    .get(&(image, category))
                    .cloned()
                    .unwrap_or_default();
                if gts.is_empty() && indices.is_empty() {
                    continue;
                }
                let boxes: Vec<BBox> = indices.iter().map(|&i| all[i].bbox).collect();
                groups.push((boxes, indices, gts));
            }

            let mut aps = Vec::with_capacity(config.iou_thresholds.len());
            let mut counts = Vec::with_capacity(config.iou_thresholds.len());
            for &threshold in &config.iou_thresholds {
                let mut pooled: Vec<(f64, usize, bool)> = Vec::new();
                for (boxes, indices, gts) in &groups {
                    let flags = match_boxes(boxes, gts, threshold);
                    for (&idx, matched) in indices.iter().zip(flags) {
                        pooled.push((all[idx].score, idx, matched));
                    }
                }
                // global score order, ties by input position
                pooled.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                let flat: Vec<(f64, bool)> = pooled.iter().map(|&(s, _, m)| (s, m)).collect();
                let tp = flat.iter().filter(|&&(_, m)| m).count();
                counts.push(MatchCounts {
                    true_positives: tp,
                    false_positives: flat.len() - tp,
                    false_negatives: total_gt - tp,
                });
                let curve = precision_recall(&flat, total_gt);
                aps.push(average_precision(&curve, config.recall_points));
            }
            CategoryResult {
                category,
                total_gt,
                aps,
                counts,
            }
        })
        .collect();

    let mut per_class_ap = BTreeMap::new();
    let mut counts = BTreeMap::new();
    let mut sum = 0.0;
    let mut terms = 0usize;
    for result in results {
        if result.total_gt == 0 {
            continue; // class absent from the ground truth: not scored
        }
        sum += result.aps.iter().sum::<f64>();
        terms += result.aps.len();
        per_class_ap.insert(result.category, result.aps);
        counts.insert(result.category, result.counts);
    }
    let map_overall = if terms > 0 { sum / terms as f64 } else { 0.0 };

    Ok(EvalReport {
        iou_thresholds: config.iou_thresholds.clone(),
        per_class_ap,
        counts,
        map_overall,
    })
}
