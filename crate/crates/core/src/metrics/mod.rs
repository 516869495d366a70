//! Camouflage-map evaluation suite.
//!
//! Thresholded metrics (F-measure, IOU) binarize the prediction first, under
//! either a per-map adaptive threshold (mean plus standard deviation) or a
//! fixed one. The E-measure is evaluated on the same binarized prediction;
//! the S-measure and weighted F-measure consume the raw grayscale map, and
//! MAE always does.
//!
//! Zero-mask ground truth (images with no camouflaged object) is scored by
//! convention: F-measure and IOU are 1 when the prediction is also empty and
//! 0 when it is not.

mod structure;
mod weighted;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use structure::s_measure;
pub use weighted::weighted_f;

use crate::error::{Error, Result};
use crate::io;
use crate::map::{BinaryMask, GrayscaleMap};

/// The weighting exponent the F-measure protocol fixes for emphasis on
/// precision.
pub const DEFAULT_BETA_SQ: f64 = 0.3;

/// Denominator guard in the E-measure alignment term.
pub const E_MEASURE_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    Adaptive,
    Fixed,
}

/// Binarization rule: a pixel is foreground iff `value >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub kind: ThresholdKind,
    pub fixed_value: f64,
}

impl ThresholdRule {
    pub fn adaptive() -> Self {
        Self {
            kind: ThresholdKind::Adaptive,
            fixed_value: 0.5,
        }
    }

    pub fn fixed(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutOfRange(format!(
                "fixed threshold {value} outside [0, 1]"
            )));
        }
        Ok(Self {
            kind: ThresholdKind::Fixed,
            fixed_value: value,
        })
    }

    pub fn threshold_for(&self, map: &GrayscaleMap) -> f64 {
        match self.kind {
            ThresholdKind::Adaptive => adaptive_threshold(map),
            ThresholdKind::Fixed => self.fixed_value,
        }
    }
}

impl Default for ThresholdRule {
    fn default() -> Self {
        Self::adaptive()
    }
}

/// Per-map adaptive threshold: mean plus population standard deviation,
/// clamped into `[0, 1]`.
pub fn adaptive_threshold(map: &GrayscaleMap) -> f64 {
    (map.mean() + map.std_dev()).clamp(0.0, 1.0)
}

/// Binarizes with the `>=` convention.
pub fn binarize(map: &GrayscaleMap, threshold: f64) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::OutOfRange(format!(
            "threshold {threshold} outside [0, 1]"
        )));
    }
    let values = map
        .values()
        .iter()
        .map(|&v| (v >= threshold) as u8)
        .collect();
    BinaryMask::new(map.width(), map.height(), values)
}

/// Pixel confusion counts between a binary prediction and ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    check_mask_dims(pred, gt)?;
    let mut c = ConfusionCounts {
        true_pos: 0,
        false_pos: 0,
        false_neg: 0,
        true_neg: 0,
    };
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        match (p, g) {
            (1, 1) => c.true_pos += 1,
            (1, 0) => c.false_pos += 1,
            (0, 1) => c.false_neg += 1,
            _ => c.true_neg += 1,
        }
    }
    Ok(c)
}

fn check_mask_dims(pred: &BinaryMask, gt: &BinaryMask) -> Result<()> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    Ok(())
}

/// `(1 + β²) P R / (β² P + R)` with the zero-mask conventions applied.
pub fn f_beta(pred: &BinaryMask, gt: &BinaryMask, beta_sq: f64) -> Result<f64> {
    Ok(f_beta_from_counts(&confusion(pred, gt)?, beta_sq))
}

pub fn f_beta_from_counts(c: &ConfusionCounts, beta_sq: f64) -> f64 {
    let gt_empty = c.true_pos + c.false_neg == 0;
    let pred_empty = c.true_pos + c.false_pos == 0;
    if gt_empty {
        return if pred_empty { 1.0 } else { 0.0 };
    }
    let precision = if pred_empty {
        0.0
    } else {
        c.true_pos as f64 / (c.true_pos + c.false_pos) as f64
    };
    let recall = c.true_pos as f64 / (c.true_pos + c.false_neg) as f64;
    let denom = beta_sq * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + beta_sq) * precision * recall / denom
    }
}

/// Intersection over union; an empty union counts as perfect agreement.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let c = confusion(pred, gt)?;
    let union = c.true_pos + c.false_pos + c.false_neg;
    Ok(if union == 0 {
        1.0
    } else {
        c.true_pos as f64 / union as f64
    })
}

/// Mean absolute pixel difference between raw grayscale maps.
pub fn mae(pred: &GrayscaleMap, gt: &GrayscaleMap) -> Result<f64> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let total: f64 = pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(p, g)| (p - g).abs())
        .sum();
    Ok(total / pred.len() as f64)
}

/// Enhanced-alignment measure on binarized maps.
///
/// Both maps are centered on their means; the pixelwise alignment
/// `2ab / (a² + b² + ε)` is mapped through `(ξ + 1)² / 4` and averaged.
/// Identical maps score exactly 1; a constant ground truth falls back to
/// `1 - mean(pred)` (all-background) or `mean(pred)` (all-foreground).
pub fn e_measure(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    check_mask_dims(pred, gt)?;
    if pred.values() == gt.values() {
        return Ok(1.0);
    }
    let n = pred.values().len() as f64;
    let pred_mean = pred.count_ones() as f64 / n;
    if gt.is_all_zero() {
        return Ok(1.0 - pred_mean);
    }
    if gt.is_all_one() {
        return Ok(pred_mean);
    }
    let gt_mean = gt.count_ones() as f64 / n;
    let mut acc = 0.0;
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        let a = p as f64 - pred_mean;
        let b = g as f64 - gt_mean;
        let xi = 2.0 * a * b / (a * a + b * b + E_MEASURE_EPSILON);
        let enhanced = (xi + 1.0) * (xi + 1.0) / 4.0;
        acc += enhanced;
    }
    Ok(acc / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSplit {
    CamoOnly,
    Full,
}

impl std::fmt::Display for DatasetSplit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetSplit::CamoOnly => write!(f, "camo_only"),
            DatasetSplit::Full => write!(f, "full"),
        }
    }
}

/// One evaluated image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageEval {
    pub image_id: String,
    pub mae: f64,
    pub f_beta: f64,
    pub iou: f64,
    pub e_phi: f64,
    pub s_alpha: f64,
    pub weighted_f: f64,
    pub threshold: f64,
}

/// Arithmetic means over the per-image rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalAggregate {
    pub mae: f64,
    pub f_beta: f64,
    pub iou: f64,
    pub e_phi: f64,
    pub s_alpha: f64,
    pub weighted_f: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub split: DatasetSplit,
    pub rule: ThresholdRule,
    pub rows: Vec<ImageEval>,
    pub aggregate: Option<EvalAggregate>,
}

impl EvalReport {
    fn aggregate_of(rows: &[ImageEval]) -> Option<EvalAggregate> {
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let mean = |f: fn(&ImageEval) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Some(EvalAggregate {
            mae: mean(|r| r.mae),
            f_beta: mean(|r| r.f_beta),
            iou: mean(|r| r.iou),
            e_phi: mean(|r| r.e_phi),
            s_alpha: mean(|r| r.s_alpha),
            weighted_f: mean(|r| r.weighted_f),
            threshold: mean(|r| r.threshold),
        })
    }

    /// Writes the report with the fixed column set, one row per image plus a
    /// trailing `mean` row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e),
        })?;
        let write_err = |e: csv::Error| Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e),
        };
        w.write_record([
            "image_id",
            "mae",
            "f_beta",
            "iou",
            "e_phi",
            "s_alpha",
            "weighted_f",
            "threshold",
        ])
        .map_err(write_err)?;
        let fmt = |v: f64| format!("{v:.6}");
        for r in &self.rows {
            w.write_record([
                r.image_id.clone(),
                fmt(r.mae),
                fmt(r.f_beta),
                fmt(r.iou),
                fmt(r.e_phi),
                fmt(r.s_alpha),
                fmt(r.weighted_f),
                fmt(r.threshold),
            ])
            .map_err(write_err)?;
        }
        if let Some(a) = &self.aggregate {
            w.write_record([
                "mean".to_string(),
                fmt(a.mae),
                fmt(a.f_beta),
                fmt(a.iou),
                fmt(a.e_phi),
                fmt(a.s_alpha),
                fmt(a.weighted_f),
                fmt(a.threshold),
            ])
            .map_err(write_err)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    }
}

/// Evaluates one raw prediction against one binary ground truth.
pub fn evaluate_pair(
    pred: &GrayscaleMap,
    gt: &BinaryMask,
    rule: &ThresholdRule,
) -> Result<(f64, ImageEvalValues)> {
    evaluate_pair_with(pred, gt, rule, DEFAULT_BETA_SQ)
}

/// [`evaluate_pair`] with an explicit F-measure exponent.
pub fn evaluate_pair_with(
    pred: &GrayscaleMap,
    gt: &BinaryMask,
    rule: &ThresholdRule,
    beta_sq: f64,
) -> Result<(f64, ImageEvalValues)> {
    let threshold = rule.threshold_for(pred);
    let pred_bin = binarize(pred, threshold)?;
    let values = ImageEvalValues {
        mae: mae(pred, &gt.to_grayscale())?,
        f_beta: f_beta(&pred_bin, gt, beta_sq)?,
        iou: iou(&pred_bin, gt)?,
        e_phi: e_measure(&pred_bin, gt)?,
        s_alpha: s_measure(pred, gt)?,
        weighted_f: weighted_f(pred, gt)?,
    };
    Ok((threshold, values))
}

/// Metric values without the image id and threshold bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageEvalValues {
    pub mae: f64,
    pub f_beta: f64,
    pub iou: f64,
    pub e_phi: f64,
    pub s_alpha: f64,
    pub weighted_f: f64,
}

/// Evaluates every `*.png` prediction in `pred_dir` against the ground-truth
/// file of the same stem in `gt_dir`.
///
/// Rows come back sorted by image id; the per-image work runs in parallel
/// but aggregation order is fixed, so reports are reproducible. A prediction
/// without a ground-truth partner fails the whole run, listing the ids.
pub fn evaluate_dataset(
    pred_dir: &Path,
    gt_dir: &Path,
    rule: &ThresholdRule,
    split: DatasetSplit,
) -> Result<EvalReport> {
    evaluate_dataset_with(pred_dir, gt_dir, rule, split, DEFAULT_BETA_SQ)
}

/// [`evaluate_dataset`] with an explicit F-measure exponent.
pub fn evaluate_dataset_with(
    pred_dir: &Path,
    gt_dir: &Path,
    rule: &ThresholdRule,
    split: DatasetSplit,
    beta_sq: f64,
) -> Result<EvalReport> {
    let preds = io::png_stems(pred_dir)?;
    let missing: Vec<String> = preds
        .iter()
        .filter(|(stem, _)| !gt_dir.join(format!("{stem}.png")).exists())
        .map(|(stem, _)| stem.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingGroundTruth(missing.join(", ")));
    }

    let rows: Result<Vec<ImageEval>> = preds
        .par_iter()
        .map(|(stem, pred_path)| {
            let pred = io::load_grayscale_png(pred_path)?;
            let gt = io::load_binary_mask_png(&gt_dir.join(format!("{stem}.png")))?;
            let (threshold, v) = evaluate_pair_with(&pred, &gt, rule, beta_sq)?;
            Ok(ImageEval {
                image_id: stem.clone(),
                mae: v.mae,
                f_beta: v.f_beta,
                iou: v.iou,
                e_phi: v.e_phi,
                s_alpha: v.s_alpha,
                weighted_f: v.weighted_f,
                threshold,
            })
        })
        .collect();
    let rows = rows?;
    let aggregate = EvalReport::aggregate_of(&rows);
    Ok(EvalReport {
        split,
        rule: *rule,
        rows,
        aggregate,
    })
}
