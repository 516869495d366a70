//! Weighted F-measure for grayscale foreground maps.
//!
//! Errors inside the ground-truth foreground may borrow from their smoothed
//! neighborhood (a 7x7 Gaussian, sigma 5), capturing pixel dependency;
//! background errors are inflated by `2 - exp(ln(0.5)/5 * D)` where `D` is
//! the Euclidean distance to the nearest foreground pixel, so false
//! positives far from the object cost more. Weighted true positives and
//! false positives then feed the usual F-measure form with beta² = 1.
//!
//! Gaussian smoothing renormalizes the kernel at the borders instead of
//! padding with zeros, so an all-wrong prediction scores exactly 0 and a
//! perfect one exactly 1.

use crate::error::{Error, Result};
use crate::map::{BinaryMask, GrayscaleMap};

const KERNEL_SIZE: usize = 7;
const KERNEL_SIGMA: f64 = 5.0;
const DISTANCE_DECAY: f64 = 5.0;

pub fn weighted_f(pred: &GrayscaleMap, gt: &BinaryMask) -> Result<f64> {
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
        // Convention for zero-mask ground truth: reward an empty prediction.
        let pred_empty = pred.values().iter().all(|&v| v == 0.0);
        return Ok(if pred_empty { 1.0 } else { 0.0 });
    }

    let (w, h) = (pred.width(), pred.height());
    let n_fg = gt.count_ones() as f64;

    let error: Vec<f64> = pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(&p, &g)| (p - g as f64).abs())
        .collect();

    let (dist, nearest) = distance_to_foreground(gt);

    // Background pixels take the error of their nearest foreground pixel
    // before smoothing, so boundary smoothing sees plausible neighbors.
    let mut transferred = error.clone();
    for (i, &g) in gt.values().iter().enumerate() {
        if g == 0 {
            transferred[i] = error[nearest[i]];
        }
    }
    let smoothed = blur_renormalized(&transferred, w, h);

    // Foreground keeps the smaller of its own and its smoothed error.
    let mut weighted_err = error.clone();
    for (i, &g) in gt.values().iter().enumerate() {
        if g == 1 && smoothed[i] < error[i] {
            weighted_err[i] = smoothed[i];
        }
    }
    // Importance: distant background errors count up to twice.
    let ln_half = 0.5f64.ln();
    for (i, &g) in gt.values().iter().enumerate() {
        if g == 0 {
            weighted_err[i] *= 2.0 - (ln_half / DISTANCE_DECAY * dist[i]).exp();
        }
    }

    let mut fg_err = 0.0;
    let mut bg_err = 0.0;
    for (i, &g) in gt.values().iter().enumerate() {
        if g == 1 {
            fg_err += weighted_err[i];
        } else {
            bg_err += weighted_err[i];
        }
    }

    let tp_w = n_fg - fg_err;
    let fp_w = bg_err;
    let recall = 1.0 - fg_err / n_fg;
    let precision = if tp_w + fp_w > 0.0 {
        tp_w / (tp_w + fp_w)
    } else {
        0.0
    };
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok((2.0 * precision * recall / (precision + recall)).clamp(0.0, 1.0))
}

/// Exact Euclidean distance transform with nearest-source tracking.
///
/// Returns, for every pixel, the distance to the nearest foreground pixel
/// and that pixel's linear index. The mask must contain foreground.
pub(crate) fn distance_to_foreground(gt: &BinaryMask) -> (Vec<f64>, Vec<usize>) {
    let (w, h) = (gt.width(), gt.height());
    debug_assert!(gt.count_ones() > 0);

    // Pass 1: per column, squared distance to the nearest foreground row.
    let mut col_d2 = vec![f64::INFINITY; w * h];
    let mut col_row = vec![usize::MAX; w * h];
    for x in 0..w {
        let mut last: Option<usize> = None;
        for y in 0..h {
            if gt.get(x, y) == 1 {
                last = Some(y);
            }
            if let Some(fy) = last {
                let d = (y - fy) as f64;
                col_d2[y * w + x] = d * d;
                col_row[y * w + x] = fy;
            }
        }
        last = None;
        for y in (0..h).rev() {
            if gt.get(x, y) == 1 {
                last = Some(y);
            }
            if let Some(fy) = last {
                let d = (fy - y) as f64;
                if d * d < col_d2[y * w + x] {
                    col_d2[y * w + x] = d * d;
                    col_row[y * w + x] = fy;
                }
            }
        }
    }

    // Pass 2: per row, lower envelope of parabolas over the column results.
    let mut dist = vec![0.0; w * h];
    let mut nearest = vec![0usize; w * h];
    let mut f = vec![0.0; w];
    for y in 0..h {
        for x in 0..w {
            f[x] = col_d2[y * w + x];
        }
        for (x, (d2, src_x)) in squared_dt_1d(&f).into_iter().enumerate() {
            dist[y * w + x] = d2.sqrt();
            nearest[y * w + x] = col_row[y * w + src_x] * w + src_x;
        }
    }
    (dist, nearest)
}

/// 1-D squared-distance transform `min_q (x - q)^2 + f(q)` with argmin,
/// skipping infinite sites. At least one site must be finite.
fn squared_dt_1d(f: &[f64]) -> Vec<(f64, usize)> {
    let n = f.len();
    let mut sites: Vec<usize> = Vec::with_capacity(n);
    let mut bounds: Vec<f64> = Vec::with_capacity(n + 1);
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            match sites.last() {
                None => {
                    sites.push(q);
                    bounds.clear();
                    bounds.push(f64::NEG_INFINITY);
                    bounds.push(f64::INFINITY);
                    break;
                }
                Some(&p) => {
                    let pf = p as f64;
                    let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
                    if s <= bounds[sites.len() - 1] {
                        sites.pop();
                        bounds.pop();
                    } else {
                        bounds.pop(); // replace trailing +inf
                        bounds.push(s);
                        bounds.push(f64::INFINITY);
                        sites.push(q);
                        break;
                    }
                }
            }
        }
    }
    debug_assert!(!sites.is_empty(), "no finite site in 1-D transform");

    let mut out = Vec::with_capacity(n);
    let mut k = 0usize;
    for x in 0..n {
        while bounds[k + 1] < x as f64 {
            k += 1;
        }
        let q = sites[k];
        let dx = x as f64 - q as f64;
        out.push((dx * dx + f[q], q));
    }
    out
}

fn gaussian_kernel() -> [[f64; KERNEL_SIZE]; KERNEL_SIZE] {
    let r = (KERNEL_SIZE / 2) as isize;
    let mut k = [[0.0; KERNEL_SIZE]; KERNEL_SIZE];
    let mut total = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let v = (-((dx * dx + dy * dy) as f64) / (2.0 * KERNEL_SIGMA * KERNEL_SIGMA)).exp();
            k[(dy + r) as usize][(dx + r) as usize] = v;
            total += v;
        }
    }
    for row in k.iter_mut() {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    k
}

/// Gaussian blur that renormalizes by the in-bounds kernel mass at borders.
fn blur_renormalized(values: &[f64], w: usize, h: usize) -> Vec<f64> {
    let kernel = gaussian_kernel();
    let r = (KERNEL_SIZE / 2) as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            let mut mass = 0.0;
            for dy in -r..=r {
                let yy = y + dy;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                for dx in -r..=r {
                    let xx = x + dx;
                    if xx < 0 || xx >= w as isize {
                        continue;
                    }
                    let kv = kernel[(dy + r) as usize][(dx + r) as usize];
                    acc += kv * values[yy as usize * w + xx as usize];
                    mass += kv;
                }
            }
            out[y as usize * w + x as usize] = acc / mass;
        }
    }
    out
}
