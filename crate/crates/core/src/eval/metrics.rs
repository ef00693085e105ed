//! Single-class detection metrics with COCO conventions: greedy matching by
//! descending score, 101-point interpolated AP, recall at a detection cap.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::BBox;

pub const DEFAULT_CONF_TH: f64 = 0.4;
pub const DEFAULT_NMS_IOU: f64 = 0.45;
pub const DEFAULT_MAX_DETS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no ground-truth boxes to evaluate against")]
    NoGroundTruth,
    #[error("detection score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("prediction refers to unknown pair {0}")]
    UnknownPair(usize),
    #[error("predictions and ground truth cover different image counts ({0} vs {1})")]
    ImageCountMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BBox, score: f64) -> Result<Self, EvalError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(EvalError::InvalidScore(score));
        }
        Ok(Self { bbox, score })
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

/// Indices of `dets` sorted by descending score, ties by input order.
fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    idx.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    idx
}

/// Greedy non-maximum suppression: keep a detection iff its IoU with every
/// detection kept so far is at most `iou_th`. Returned in score order.
pub fn nms(dets: &[Detection], iou_th: f64) -> Vec<Detection> {
    let mut kept: Vec<Detection> = Vec::new();
    for i in score_order(dets) {
        let d = dets[i];
        if kept.iter().all(|k| k.bbox.iou(&d.bbox) <= iou_th) {
            kept.push(d);
        }
    }
    kept
}

/// Match one image's detections (already in score order) to its ground
/// truth. Returns a true-positive flag per detection.
fn match_image(dets: &[Detection], gts: &[BBox], iou_th: f64) -> Vec<bool> {
    let mut taken = vec![false; gts.len()];
    dets.iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                let v = d.bbox.iou(gt);
                if v >= iou_th && best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            match best {
                Some((g, _)) => {
                    taken[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Per-image detections sorted by score and capped at `max_dets`.
fn ranked(preds: &[Vec<Detection>], max_dets: usize) -> Vec<Vec<Detection>> {
    preds
        .iter()
        .map(|dets| score_order(dets).into_iter().take(max_dets).map(|i| dets[i]).collect())
        .collect()
}

fn check_shapes(preds: &[Vec<Detection>], gts: &[Vec<BBox>]) -> Result<usize, EvalError> {
    if preds.len() != gts.len() {
        return Err(EvalError::ImageCountMismatch(preds.len(), gts.len()));
    }
    let npos: usize = gts.iter().map(Vec::len).sum();
    if npos == 0 {
        return Err(EvalError::NoGroundTruth);
    }
    Ok(npos)
}

/// Average precision (percent) at one IoU threshold, 101-point
/// interpolation over recall.
pub fn average_precision(preds: &[Vec<Detection>], gts: &[Vec<BBox>], iou_th: f64) -> Result<f64, EvalError> {
    let npos = check_shapes(preds, gts)?;
    let ranked = ranked(preds, DEFAULT_MAX_DETS);
    let mut pooled: Vec<(f64, bool)> = Vec::new();
    for (dets, gt) in ranked.iter().zip(gts) {
        let tp = match_image(dets, gt, iou_th);
        pooled.extend(dets.iter().zip(tp).map(|(d, t)| (d.score, t)));
    }
    // stable: ties keep image-then-rank order
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut recall = Vec::with_capacity(pooled.len());
    let mut precision = Vec::with_capacity(pooled.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &(_, is_tp) in &pooled {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / npos as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let total: f64 = (0..=100)
        .map(|r| {
            let r = r as f64 / 100.0;
            let at = recall.partition_point(|&x| x < r);
            precision.get(at).copied().unwrap_or(0.0)
        })
        .sum();
    Ok(total / 101.0 * 100.0)
}

/// Percentage of ground-truth boxes matched by the top `max_dets`
/// detections of their image at `iou_th`.
pub fn average_recall(
    preds: &[Vec<Detection>],
    gts: &[Vec<BBox>],
    iou_th: f64,
    max_dets: usize,
) -> Result<f64, EvalError> {
    let npos = check_shapes(preds, gts)?;
    let matched: usize = ranked(preds, max_dets)
        .iter()
        .zip(gts)
        .map(|(dets, gt)| match_image(dets, gt, iou_th).into_iter().filter(|&t| t).count())
        .sum();
    Ok(matched as f64 / npos as f64 * 100.0)
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

/// Mean of AP over the ten COCO IoU thresholds.
pub fn mean_ap(preds: &[Vec<Detection>], gts: &[Vec<BBox>]) -> Result<f64, EvalError> {
    let mut sum = 0.0;
    for th in coco_iou_thresholds() {
        sum += average_precision(preds, gts, th)?;
    }
    Ok(sum / 10.0)
}

/// Detection report, all values percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap50: f64,
    pub ap75: f64,
    pub ar50: f64,
    pub ar75: f64,
    pub map: f64,
}

impl EvalReport {
    pub fn compute(preds: &[Vec<Detection>], gts: &[Vec<BBox>]) -> Result<Self, EvalError> {
        Ok(Self {
            ap50: average_precision(preds, gts, 0.5)?,
            ap75: average_precision(preds, gts, 0.75)?,
            ar50: average_recall(preds, gts, 0.5, DEFAULT_MAX_DETS)?,
            ar75: average_recall(preds, gts, 0.75, DEFAULT_MAX_DETS)?,
            map: mean_ap(preds, gts)?,
        })
    }

    /// Values rounded to two decimals for reporting.
    pub fn rounded(&self) -> Self {
        let r = |v: f64| (v * 100.0).round() / 100.0;
        Self {
            ap50: r(self.ap50),
            ap75: r(self.ap75),
            ar50: r(self.ar50),
            ar75: r(self.ar75),
            map: r(self.map),
        }
    }
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    /// 0-based line index of the pair in the pairs file.
    pub pair_id: usize,
    pub detections: Vec<Detection>,
}

/// Filter by confidence, suppress overlaps and score predictions against
/// the ground-truth regions of each pair. Pairs without a prediction line
/// count as having no detections.
pub fn evaluate(
    preds: &[PredictionLine],
    gts: &[Vec<BBox>],
    conf_th: f64,
    nms_iou: f64,
) -> Result<EvalReport, EvalError> {
    let mut per_image: Vec<Vec<Detection>> = vec![Vec::new(); gts.len()];
    for p in preds {
        let slot = per_image.get_mut(p.pair_id).ok_or(EvalError::UnknownPair(p.pair_id))?;
        for d in &p.detections {
            Detection::new(d.bbox, d.score)?;
        }
        slot.extend(p.detections.iter().filter(|d| d.score >= conf_th).copied());
    }
    let per_image: Vec<Vec<Detection>> = per_image.iter().map(|d| nms(d, nms_iou)).collect();
    EvalReport::compute(&per_image, gts)
}
