//! Structure measure: region-aware similarity between a grayscale prediction
//! and a binary ground truth.
//!
//! `S = 0.5 * S_object + 0.5 * S_region`. The object term contrasts
//! foreground and background prediction statistics against their ideal
//! values, weighted by the ground-truth foreground ratio. The region term
//! splits both maps into four blocks at the ground-truth centroid and
//! combines a structural-similarity score per block, weighted by block area
//! fraction. Constant ground truths short-circuit: all-background scores
//! `1 - mean(pred)`, all-foreground scores `mean(pred)`.

use crate::error::{Error, Result};
use crate::map::{BinaryMask, GrayscaleMap};

pub fn s_measure(pred: &GrayscaleMap, gt: &BinaryMask) -> Result<f64> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    if gt.is_all_zero() {
        return Ok(1.0 - pred.mean());
    }
    if gt.is_all_one() {
        return Ok(pred.mean());
    }
    let s = 0.5 * s_object(pred, gt) + 0.5 * s_region(pred, gt);
    Ok(s.clamp(0.0, 1.0))
}

/// `2x / (x² + 1 + σ)` where `x` is the region mean and `σ` the sample
/// standard deviation. Equals 1 exactly for a constant region of ones.
fn object_score(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sigma = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        var.sqrt()
    } else {
        0.0
    };
    2.0 * mean / (mean * mean + 1.0 + sigma)
}

fn s_object(pred: &GrayscaleMap, gt: &BinaryMask) -> f64 {
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        if g == 1 {
            fg.push(p);
        } else {
            bg.push(1.0 - p);
        }
    }
    let mu = gt.count_ones() as f64 / gt.values().len() as f64;
    mu * object_score(&fg) + (1.0 - mu) * object_score(&bg)
}

/// Centroid of the foreground, returned as the widths of the left and top
/// blocks (at least 1, at most the full extent).
fn centroid_split(gt: &BinaryMask) -> (usize, usize) {
    let mut sx = 0usize;
    let mut sy = 0usize;
    let mut n = 0usize;
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            if gt.get(x, y) == 1 {
                sx += x;
                sy += y;
                n += 1;
            }
        }
    }
    let left = ((sx as f64 / n as f64) + 1.0).round() as usize;
    let top = ((sy as f64 / n as f64) + 1.0).round() as usize;
    (left.clamp(1, gt.width()), top.clamp(1, gt.height()))
}

/// Structural similarity between a grayscale block and a binary block.
fn ssim_block(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len() as f64;
    let x = pred.iter().sum::<f64>() / n;
    let y = gt.iter().sum::<f64>() / n;
    let (mut sx2, mut sy2, mut sxy) = (0.0, 0.0, 0.0);
    for (&p, &g) in pred.iter().zip(gt) {
        sx2 += (p - x) * (p - x);
        sy2 += (g - y) * (g - y);
        sxy += (p - x) * (g - y);
    }
    let denom = if pred.len() > 1 {
        (pred.len() - 1) as f64
    } else {
        1.0
    };
    let (sx2, sy2, sxy) = (sx2 / denom, sy2 / denom, sxy / denom);
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sx2 + sy2);
    if alpha != 0.0 {
        alpha / beta
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn s_region(pred: &GrayscaleMap, gt: &BinaryMask) -> f64 {
    let (left, top) = centroid_split(gt);
    let (w, h) = (gt.width(), gt.height());
    let total = (w * h) as f64;
    let blocks = [
        (0, left, 0, top),
        (left, w, 0, top),
        (0, left, top, h),
        (left, w, top, h),
    ];
    let mut score = 0.0;
    for (x0, x1, y0, y1) in blocks {
        if x0 >= x1 || y0 >= y1 {
            continue; // empty block, zero weight
        }
        let mut pv = Vec::with_capacity((x1 - x0) * (y1 - y0));
        let mut gv = Vec::with_capacity((x1 - x0) * (y1 - y0));
        for y in y0..y1 {
            for x in x0..x1 {
                pv.push(pred.get(x, y));
                gv.push(gt.get(x, y) as f64);
            }
        }
        let weight = ((x1 - x0) * (y1 - y0)) as f64 / total;
        score += weight * ssim_block(&pv, &gv);
    }
    score
}
