//! RoI feature extraction operators.
//!
//! Three ways to pool a fixed grid of values out of a feature map for a
//! continuous box:
//!
//! * [`roi_pool_max`]: the quantizing baseline. Box coordinates are rounded
//!   to integers, grid cells are formed by integer division, and each cell
//!   max-pools the pixels it covers.
//! * [`roi_align`]: no rounding; each bin averages a fixed number of
//!   bilinear point samples.
//! * [`prroi_forward`] / [`prroi_backward`]: each bin is the exact average
//!   integral of the bilinearly interpolated feature over the bin rectangle,
//!   evaluated in closed form per pixel cell. The backward pass returns the
//!   exact adjoint for the feature values and analytic derivatives for the
//!   four box coordinates, so the box itself can be optimized.
//!
//! The continuous extension shared by [`roi_align`] and the PrRoI operators
//! places pixel `(i, j)` at center `(j + 0.5, i + 0.5)` and pads with zeros
//! beyond the outermost pixel centers: the field decays linearly over one
//! pixel past the border and is zero everywhere beyond. Boxes are therefore
//! never clamped here; integration over padding contributes nothing.

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::map::FeatureMap;

/// Conventional pooled output size when nothing else is configured.
pub const DEFAULT_BINS: usize = 7;

/// Default sub-samples per axis for [`roi_align`].
pub const DEFAULT_SAMPLES_PER_AXIS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolOperator {
    RoiPoolMax,
    RoiAlign,
    PrRoi,
}

/// Output grid geometry plus the operator a driver should dispatch to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub bins_x: usize,
    pub bins_y: usize,
    pub operator: PoolOperator,
}

impl PoolSpec {
    pub fn new(bins_x: usize, bins_y: usize, operator: PoolOperator) -> Result<Self> {
        if bins_x == 0 || bins_y == 0 {
            return Err(Error::InvalidInput(format!(
                "pooling grid must be positive, got {bins_x}x{bins_y}"
            )));
        }
        Ok(Self {
            bins_x,
            bins_y,
            operator,
        })
    }

    pub fn prroi(bins_x: usize, bins_y: usize) -> Result<Self> {
        Self::new(bins_x, bins_y, PoolOperator::PrRoi)
    }
}

/// Pooled `bins_y x bins_x x C` grid with the operator that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolResult {
    pub bins_x: usize,
    pub bins_y: usize,
    pub channels: usize,
    values: Vec<f64>,
    pub provenance: PoolOperator,
}

impl PoolResult {
    fn zeros(bins_x: usize, bins_y: usize, channels: usize, provenance: PoolOperator) -> Self {
        Self {
            bins_x,
            bins_y,
            channels,
            values: vec![0.0; bins_x * bins_y * channels],
            provenance,
        }
    }

    /// Wraps raw values laid out `bin_y * bins_x + bin_x, channel`-major;
    /// the usual way to hand an upstream gradient to [`prroi_backward`].
    pub fn from_values(bins_x: usize, bins_y: usize, channels: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), bins_x * bins_y * channels);
        Self {
            bins_x,
            bins_y,
            channels,
            values,
            provenance: PoolOperator::PrRoi,
        }
    }

    pub fn get(&self, bin_y: usize, bin_x: usize, c: usize) -> f64 {
        self.values[(bin_y * self.bins_x + bin_x) * self.channels + c]
    }

    fn set(&mut self, bin_y: usize, bin_x: usize, c: usize, v: f64) {
        self.values[(bin_y * self.bins_x + bin_x) * self.channels + c] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Gradients from [`prroi_backward`]: the feature adjoint and the analytic
/// derivative with respect to `(x1, y1, x2, y2)`.
#[derive(Debug, Clone)]
pub struct PoolGradients {
    pub d_features: FeatureMap,
    pub d_box: [f64; 4],
}

/// Bilinear interpolation of the continuous feature extension at `(x, y)`.
///
/// Pixel `(i, j)` is centered at `(j + 0.5, i + 0.5)`; coordinates beyond
/// the outermost centers interpolate against zero padding.
pub fn bilinear_at(f: &FeatureMap, x: f64, y: f64, c: usize) -> f64 {
    let u = x - 0.5;
    let v = y - 0.5;
    let j0 = u.floor();
    let i0 = v.floor();
    let du = u - j0;
    let dv = v - i0;
    let j0 = j0 as i64;
    let i0 = i0 as i64;
    let s = |i: i64, j: i64| fetch(f, c, j, i);
    (1.0 - du) * (1.0 - dv) * s(i0, j0)
        + du * (1.0 - dv) * s(i0, j0 + 1)
        + (1.0 - du) * dv * s(i0 + 1, j0)
        + du * dv * s(i0 + 1, j0 + 1)
}

#[inline]
fn fetch(f: &FeatureMap, c: usize, j: i64, i: i64) -> f64 {
    if j < 0 || i < 0 || j >= f.width() as i64 || i >= f.height() as i64 {
        0.0
    } else {
        f.get(c, j as usize, i as usize)
    }
}

/// `(∫ (1-t) dt, ∫ t dt)` over `[lo, hi] ⊆ [0, 1]`.
#[inline]
fn seg_weights(lo: f64, hi: f64) -> (f64, f64) {
    let linear = 0.5 * (hi * hi - lo * lo);
    ((hi - lo) - linear, linear)
}

/// Unit cells `[j, j+1]` overlapping `[a, b]`, clipped, with their segment
/// weights. Cells outside `[-1, n-1]` carry only padding and are skipped.
fn cell_clips(a: f64, b: f64, n: usize) -> Vec<(i64, f64, f64)> {
    let mut out = Vec::new();
    if b <= a {
        return out;
    }
    let j_lo = (a.floor() as i64).max(-1);
    let j_hi = ((b.ceil() as i64) - 1).min(n as i64 - 1);
    for j in j_lo..=j_hi {
        let lo = a.max(j as f64) - j as f64;
        let hi = b.min((j + 1) as f64) - j as f64;
        if hi <= lo {
            continue;
        }
        let (w0, w1) = seg_weights(lo, hi);
        out.push((j, w0, w1));
    }
    out
}

struct BinRect {
    // Bin extent in grid coordinates (pixel j at coordinate j).
    ax1: f64,
    ax2: f64,
    ay1: f64,
    ay2: f64,
    // Fractions of the box width/height at the bin edges.
    sx: f64,
    tx: f64,
    sy: f64,
    ty: f64,
    w: f64,
    h: f64,
}

fn bin_rect(b: &BoundingBox, spec: &PoolSpec, gx: usize, gy: usize) -> BinRect {
    let nx = spec.bins_x as f64;
    let ny = spec.bins_y as f64;
    let sx = gx as f64 / nx;
    let tx = (gx + 1) as f64 / nx;
    let sy = gy as f64 / ny;
    let ty = (gy + 1) as f64 / ny;
    let bw = b.width() / nx;
    let bh = b.height() / ny;
    BinRect {
        ax1: b.x1 + sx * b.width() - 0.5,
        ax2: b.x1 + tx * b.width() - 0.5,
        ay1: b.y1 + sy * b.height() - 0.5,
        ay2: b.y1 + ty * b.height() - 0.5,
        sx,
        tx,
        sy,
        ty,
        w: bw,
        h: bh,
    }
}

/// Integral of the continuous extension over one bin rectangle, one channel.
fn bin_integral(
    f: &FeatureMap,
    c: usize,
    x_clips: &[(i64, f64, f64)],
    y_clips: &[(i64, f64, f64)],
) -> f64 {
    let mut total = 0.0;
    for &(i, wy0, wy1) in y_clips {
        for &(j, wx0, wx1) in x_clips {
            let f00 = fetch(f, c, j, i);
            let f10 = fetch(f, c, j + 1, i);
            let f01 = fetch(f, c, j, i + 1);
            let f11 = fetch(f, c, j + 1, i + 1);
            total += f00 * wx0 * wy0 + f10 * wx1 * wy0 + f01 * wx0 * wy1 + f11 * wx1 * wy1;
        }
    }
    total
}

/// `∫ f(u0, v) dv` over `[b1, b2]` in grid coordinates: the field along a
/// vertical line is piecewise linear with nodes at integer `v`.
fn line_integral_vertical(f: &FeatureMap, c: usize, u0: f64, b1: f64, b2: f64) -> f64 {
    let j0f = u0.floor();
    let du = u0 - j0f;
    let j0 = j0f as i64;
    let node = |i: i64| (1.0 - du) * fetch(f, c, j0, i) + du * fetch(f, c, j0 + 1, i);
    let mut total = 0.0;
    for (i, w0, w1) in cell_clips(b1, b2, f.height()) {
        total += node(i) * w0 + node(i + 1) * w1;
    }
    total
}

/// `∫ f(u, v0) du` over `[a1, a2]` in grid coordinates.
fn line_integral_horizontal(f: &FeatureMap, c: usize, v0: f64, a1: f64, a2: f64) -> f64 {
    let i0f = v0.floor();
    let dv = v0 - i0f;
    let i0 = i0f as i64;
    let node = |j: i64| (1.0 - dv) * fetch(f, c, j, i0) + dv * fetch(f, c, j, i0 + 1);
    let mut total = 0.0;
    for (j, w0, w1) in cell_clips(a1, a2, f.width()) {
        total += node(j) * w0 + node(j + 1) * w1;
    }
    total
}

/// Precise RoI pooling: each bin is the exact mean of the continuous feature
/// extension over the bin rectangle.
pub fn prroi_forward(f: &FeatureMap, b: &BoundingBox, spec: &PoolSpec) -> Result<PoolResult> {
    let mut out = PoolResult::zeros(spec.bins_x, spec.bins_y, f.channels(), PoolOperator::PrRoi);
    for gy in 0..spec.bins_y {
        for gx in 0..spec.bins_x {
            let r = bin_rect(b, spec, gx, gy);
            if r.w <= 0.0 || r.h <= 0.0 {
                return Err(Error::DegenerateBin);
            }
            let x_clips = cell_clips(r.ax1, r.ax2, f.width());
            let y_clips = cell_clips(r.ay1, r.ay2, f.height());
            let area = r.w * r.h;
            for c in 0..f.channels() {
                let integral = bin_integral(f, c, &x_clips, &y_clips);
                out.set(gy, gx, c, integral / area);
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`prroi_forward`].
///
/// `d_features` is the exact transpose of the (linear) integration;
/// `d_box` applies the Leibniz rule to the moving bin limits plus the
/// quotient rule for the `1/area` factor, contracted with `upstream`.
pub fn prroi_backward(
    f: &FeatureMap,
    b: &BoundingBox,
    spec: &PoolSpec,
    upstream: &PoolResult,
) -> Result<PoolGradients> {
    if upstream.bins_x != spec.bins_x
        || upstream.bins_y != spec.bins_y
        || upstream.channels != f.channels()
    {
        return Err(Error::DimensionMismatch(format!(
            "upstream grid {}x{}x{} does not match spec {}x{} with {} channels",
            upstream.bins_y,
            upstream.bins_x,
            upstream.channels,
            spec.bins_y,
            spec.bins_x,
            f.channels()
        )));
    }
    let mut d_features = FeatureMap::zeros(f.channels(), f.width(), f.height());
    let mut d_box = [0.0; 4];
    let width = f.width() as i64;
    let height = f.height() as i64;

    for gy in 0..spec.bins_y {
        for gx in 0..spec.bins_x {
            let r = bin_rect(b, spec, gx, gy);
            if r.w <= 0.0 || r.h <= 0.0 {
                return Err(Error::DegenerateBin);
            }
            let x_clips = cell_clips(r.ax1, r.ax2, f.width());
            let y_clips = cell_clips(r.ay1, r.ay2, f.height());
            let area = r.w * r.h;
            let nx = spec.bins_x as f64;
            let ny = spec.bins_y as f64;

            for c in 0..f.channels() {
                let up = upstream.get(gy, gx, c);
                if up == 0.0 {
                    continue;
                }

                // Feature adjoint: distribute the bin's weights back onto the
                // four corners of every covered cell.
                for &(i, wy0, wy1) in &y_clips {
                    for &(j, wx0, wx1) in &x_clips {
                        let mut add = |jj: i64, ii: i64, w: f64| {
                            if jj >= 0 && ii >= 0 && jj < width && ii < height {
                                let (jj, ii) = (jj as usize, ii as usize);
                                d_features.set(
                                    c,
                                    jj,
                                    ii,
                                    d_features.get(c, jj, ii) + up * w / area,
                                );
                            }
                        };
                        add(j, i, wx0 * wy0);
                        add(j + 1, i, wx1 * wy0);
                        add(j, i + 1, wx0 * wy1);
                        add(j + 1, i + 1, wx1 * wy1);
                    }
                }

                // Box gradient: line integrals along the four bin edges.
                let value = bin_integral(f, c, &x_clips, &y_clips) / area;
                let lx1 = line_integral_vertical(f, c, r.ax1, r.ay1, r.ay2);
                let lx2 = line_integral_vertical(f, c, r.ax2, r.ay1, r.ay2);
                let ly1 = line_integral_horizontal(f, c, r.ay1, r.ax1, r.ax2);
                let ly2 = line_integral_horizontal(f, c, r.ay2, r.ax1, r.ax2);

                let dv_dx1 = (lx2 * (1.0 - r.tx) - lx1 * (1.0 - r.sx)) / area + value / (nx * r.w);
                let dv_dx2 = (lx2 * r.tx - lx1 * r.sx) / area - value / (nx * r.w);
                let dv_dy1 = (ly2 * (1.0 - r.ty) - ly1 * (1.0 - r.sy)) / area + value / (ny * r.h);
                let dv_dy2 = (ly2 * r.ty - ly1 * r.sy) / area - value / (ny * r.h);

                d_box[0] += up * dv_dx1;
                d_box[1] += up * dv_dy1;
                d_box[2] += up * dv_dx2;
                d_box[3] += up * dv_dy2;
            }
        }
    }
    Ok(PoolGradients { d_features, d_box })
}

/// RoI Align: averages `samples_per_axis²` bilinear samples per bin, taken at
/// the sub-cell centers `(i + 0.5) / n` of each bin. No rounding anywhere.
pub fn roi_align(
    f: &FeatureMap,
    b: &BoundingBox,
    spec: &PoolSpec,
    samples_per_axis: usize,
) -> Result<PoolResult> {
    if samples_per_axis == 0 {
        return Err(Error::InvalidInput(
            "samples_per_axis must be at least 1".into(),
        ));
    }
    let n = samples_per_axis;
    let mut out = PoolResult::zeros(
        spec.bins_x,
        spec.bins_y,
        f.channels(),
        PoolOperator::RoiAlign,
    );
    let bw = b.width() / spec.bins_x as f64;
    let bh = b.height() / spec.bins_y as f64;
    for gy in 0..spec.bins_y {
        let y0 = b.y1 + gy as f64 * bh;
        for gx in 0..spec.bins_x {
            let x0 = b.x1 + gx as f64 * bw;
            for c in 0..f.channels() {
                let mut acc = 0.0;
                for sy in 0..n {
                    let y = y0 + (sy as f64 + 0.5) / n as f64 * bh;
                    for sx in 0..n {
                        let x = x0 + (sx as f64 + 0.5) / n as f64 * bw;
                        acc += bilinear_at(f, x, y, c);
                    }
                }
                out.set(gy, gx, c, acc / (n * n) as f64);
            }
        }
    }
    Ok(out)
}

/// Quantized max pooling: rounds the box to integer coordinates, clamps to
/// the map, forms grid cells by integer division, and max-pools each cell.
/// A cell left empty by the quantization yields 0.
pub fn roi_pool_max(f: &FeatureMap, b: &BoundingBox, spec: &PoolSpec) -> Result<PoolResult> {
    let w = f.width() as i64;
    let h = f.height() as i64;
    let x1 = (b.x1.round() as i64).clamp(0, w);
    let x2 = (b.x2.round() as i64).clamp(0, w);
    let y1 = (b.y1.round() as i64).clamp(0, h);
    let y2 = (b.y2.round() as i64).clamp(0, h);
    let roi_w = x2 - x1;
    let roi_h = y2 - y1;
    if roi_w <= 0 || roi_h <= 0 {
        return Err(Error::EmptyRoi);
    }
    let nx = spec.bins_x as i64;
    let ny = spec.bins_y as i64;
    let mut out = PoolResult::zeros(
        spec.bins_x,
        spec.bins_y,
        f.channels(),
        PoolOperator::RoiPoolMax,
    );
    for gy in 0..ny {
        let ys = y1 + gy * roi_h / ny;
        let ye = y1 + (gy + 1) * roi_h / ny;
        for gx in 0..nx {
            let xs = x1 + gx * roi_w / nx;
            let xe = x1 + (gx + 1) * roi_w / nx;
            for c in 0..f.channels() {
                let mut best = f64::NEG_INFINITY;
                for y in ys..ye {
                    for x in xs..xe {
                        best = best.max(f.get(c, x as usize, y as usize));
                    }
                }
                if !best.is_finite() {
                    best = 0.0; // empty cell after quantization
                }
                out.set(gy as usize, gx as usize, c, best);
            }
        }
    }
    Ok(out)
}

/// Dispatches on `spec.operator`. `samples_per_axis` only affects RoI Align.
pub fn pool(
    f: &FeatureMap,
    b: &BoundingBox,
    spec: &PoolSpec,
    samples_per_axis: usize,
) -> Result<PoolResult> {
    match spec.operator {
        PoolOperator::RoiPoolMax => roi_pool_max(f, b, spec),
        PoolOperator::RoiAlign => roi_align(f, b, spec, samples_per_axis),
        PoolOperator::PrRoi => prroi_forward(f, b, spec),
    }
}
