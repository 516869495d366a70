//! Texton texture features: a small oriented filter bank whose responses are
//! vector-quantized into a per-pixel texton id.
//!
//! The bank holds first-derivative-of-Gaussian filters at four orientations
//! (0, 45, 90, 135 degrees) per scale plus one center-surround
//! (difference-of-Gaussians) filter. Per-pixel descriptors canonicalize the
//! responses so a horizontal mirror maps a pixel's descriptor to the exact
//! same bits: the 0-degree response enters as magnitude, the diagonal pair
//! is sorted, and convolution accumulates mirrored tap pairs with one
//! addition each. Vocabulary construction sorts the sample list by value, so
//! the whole pipeline is invariant to pixel order and in particular to
//! horizontal flips.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::map::{FeatureMap, RgbImage};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TextonParams {
    /// Total filters: 4 orientations per scale plus one center-surround.
    pub bank_size: usize,
    /// Vocabulary size (number of textons).
    pub vocab: usize,
    /// Seed for vocabulary construction.
    pub seed: u64,
    /// Lloyd iterations.
    pub iterations: usize,
    /// Cap on samples used to build the vocabulary.
    pub max_samples: usize,
}

impl Default for TextonParams {
    fn default() -> Self {
        Self {
            bank_size: 9,
            vocab: 32,
            seed: 42,
            iterations: 20,
            max_samples: 4096,
        }
    }
}

impl TextonParams {
    fn scales(&self) -> Result<usize> {
        if self.bank_size < 5 || !(self.bank_size - 1).is_multiple_of(4) {
            return Err(Error::InvalidInput(format!(
                "bank_size must be 4*scales + 1, got {}",
                self.bank_size
            )));
        }
        Ok((self.bank_size - 1) / 4)
    }
}

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

fn luma(img: &RgbImage) -> Vec<f64> {
    img.values()
        .chunks_exact(3)
        .map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2])
        .collect()
}

struct Kernel {
    radius: isize,
    taps: Vec<f64>,
}

impl Kernel {
    #[inline]
    fn tap(&self, ky: isize, kx: isize) -> f64 {
        let side = 2 * self.radius + 1;
        self.taps[((ky + self.radius) * side + (kx + self.radius)) as usize]
    }

    /// L1 norm accumulated over mirrored tap pairs, so kernels that are
    /// mirror images of each other get bit-identical norms.
    fn l1_norm(&self) -> f64 {
        let r = self.radius;
        let mut total = 0.0;
        for ky in -r..=r {
            let mut row = self.tap(ky, 0).abs();
            for kx in 1..=r {
                row += self.tap(ky, kx).abs() + self.tap(ky, -kx).abs();
            }
            total += row;
        }
        total
    }

    fn normalized(mut self) -> Self {
        let norm = self.l1_norm();
        if norm > 0.0 {
            for t in self.taps.iter_mut() {
                *t /= norm;
            }
        }
        self
    }
}

fn kernel_from_fn(radius: isize, f: impl Fn(isize, isize) -> f64) -> Kernel {
    let side = (2 * radius + 1) as usize;
    let mut taps = Vec::with_capacity(side * side);
    for ky in -radius..=radius {
        for kx in -radius..=radius {
            taps.push(f(ky, kx));
        }
    }
    Kernel { radius, taps }
}

/// First derivative of a Gaussian along direction `(cos_t, sin_t)`.
fn oriented_derivative(sigma: f64, cos_t: f64, sin_t: f64) -> Kernel {
    let radius = (3.0 * sigma).ceil() as isize;
    kernel_from_fn(radius, |ky, kx| {
        let u = kx as f64 * cos_t + ky as f64 * sin_t;
        let g = (-((kx * kx + ky * ky) as f64) / (2.0 * sigma * sigma)).exp();
        -u * g
    })
    .normalized()
}

/// Difference of Gaussians, center over surround.
fn center_surround(sigma_center: f64, sigma_surround: f64) -> Kernel {
    let radius = (3.0 * sigma_surround).ceil() as isize;
    let gauss_sum = |sigma: f64| {
        let mut total = 0.0;
        for ky in -radius..=radius {
            let mut row = (-((ky * ky) as f64) / (2.0 * sigma * sigma)).exp();
            for kx in 1..=radius {
                let g = (-((kx * kx + ky * ky) as f64) / (2.0 * sigma * sigma)).exp();
                row += g + g;
            }
            total += row;
        }
        total
    };
    let (s1, s2) = (gauss_sum(sigma_center), gauss_sum(sigma_surround));
    kernel_from_fn(radius, |ky, kx| {
        let d2 = (kx * kx + ky * ky) as f64;
        (-d2 / (2.0 * sigma_center * sigma_center)).exp() / s1
            - (-d2 / (2.0 * sigma_surround * sigma_surround)).exp() / s2
    })
    .normalized()
}

/// Convolution with replicated borders.
///
/// The inner loop adds each mirrored tap pair with a single addition;
/// together with the pairwise kernel norms this makes the response of a
/// mirrored image at the mirrored pixel the bitwise negation (odd kernels),
/// identity (even kernels), or the paired orientation's response.
fn convolve(gray: &[f64], w: usize, h: usize, k: &Kernel) -> Vec<f64> {
    let r = k.radius;
    let clamp_x = |x: isize| x.clamp(0, w as isize - 1) as usize;
    let clamp_y = |y: isize| y.clamp(0, h as isize - 1) as usize;
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for ky in -r..=r {
                let row = &gray[clamp_y(y + ky) * w..clamp_y(y + ky) * w + w];
                let mut row_acc = k.tap(ky, 0) * row[clamp_x(x)];
                for kx in 1..=r {
                    let pair = k.tap(ky, kx) * row[clamp_x(x + kx)]
                        + k.tap(ky, -kx) * row[clamp_x(x - kx)];
                    row_acc += pair;
                }
                acc += row_acc;
            }
            out[(y as usize) * w + x as usize] = acc;
        }
    }
    out
}

/// Per-pixel descriptors, mirror-canonical: per scale
/// `[|d0|, d90, max(d45, d135), min(d45, d135)]`, then the center-surround
/// response.
fn descriptors(gray: &[f64], w: usize, h: usize, scales: usize) -> Vec<Vec<f64>> {
    let c45 = std::f64::consts::FRAC_1_SQRT_2;
    let mut per_scale = Vec::with_capacity(scales);
    for s in 0..scales {
        let sigma = (1 << s) as f64;
        let d0 = convolve(gray, w, h, &oriented_derivative(sigma, 1.0, 0.0));
        let d45 = convolve(gray, w, h, &oriented_derivative(sigma, c45, c45));
        let d90 = convolve(gray, w, h, &oriented_derivative(sigma, 0.0, 1.0));
        let d135 = convolve(gray, w, h, &oriented_derivative(sigma, -c45, c45));
        per_scale.push((d0, d45, d90, d135));
    }
    let cs = convolve(gray, w, h, &center_surround(1.0, 2.0));

    let dims = scales * 4 + 1;
    let mut out = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let mut v = Vec::with_capacity(dims);
        for (d0, d45, d90, d135) in &per_scale {
            v.push(d0[i].abs());
            v.push(d90[i]);
            let (a, b) = (d45[i], d135[i]);
            v.push(a.max(b));
            v.push(a.min(b));
        }
        v.push(cs[i]);
        out.push(v);
    }
    out
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded k-means over a canonically ordered sample list: random first
/// center, farthest-point completion, fixed Lloyd iterations. All ties break
/// on the lowest index.
fn kmeans(samples: &[Vec<f64>], k: usize, seed: u64, iterations: usize) -> Vec<Vec<f64>> {
    assert!(!samples.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..samples.len());
    let mut centers = vec![samples[first].clone()];
    let mut min_d2: Vec<f64> = samples.iter().map(|s| dist2(s, &centers[0])).collect();
    while centers.len() < k {
        let mut best = 0;
        for (i, &d) in min_d2.iter().enumerate() {
            if d > min_d2[best] {
                best = i;
            }
        }
        centers.push(samples[best].clone());
        for (i, s) in samples.iter().enumerate() {
            let d = dist2(s, centers.last().unwrap());
            if d < min_d2[i] {
                min_d2[i] = d;
            }
        }
    }

    let dims = samples[0].len();
    let mut assignment = vec![0usize; samples.len()];
    for _ in 0..iterations {
        for (i, s) in samples.iter().enumerate() {
            let mut best = 0;
            let mut best_d = dist2(s, &centers[0]);
            for (j, c) in centers.iter().enumerate().skip(1) {
                let d = dist2(s, c);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            assignment[i] = best;
        }
        let mut sums = vec![vec![0.0; dims]; k];
        let mut counts = vec![0usize; k];
        for (i, s) in samples.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (acc, v) in sums[assignment[i]].iter_mut().zip(s) {
                *acc += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Reseed an empty cluster with the sample farthest from its
                // current center.
                let mut far = 0;
                let mut far_d = -1.0;
                for (i, s) in samples.iter().enumerate() {
                    let d = dist2(s, &centers[assignment[i]]);
                    if d > far_d {
                        far = i;
                        far_d = d;
                    }
                }
                centers[j] = samples[far].clone();
            } else {
                for d in 0..dims {
                    centers[j][d] = sums[j][d] / counts[j] as f64;
                }
            }
        }
    }
    centers
}

/// One-hot texton assignment map with `params.vocab` channels.
///
/// The vocabulary is built per image from its own filter responses. Fails
/// when the image is smaller than the largest filter.
pub fn texton_features(img: &RgbImage, params: &TextonParams) -> Result<FeatureMap> {
    let scales = params.scales()?;
    if params.vocab == 0 {
        return Err(Error::InvalidInput("vocab must be positive".into()));
    }
    let max_sigma = (1usize << (scales - 1)).max(2) as f64;
    let side = 2 * (3.0 * max_sigma).ceil() as usize + 1;
    if img.width() < side || img.height() < side {
        return Err(Error::ImageTooSmall(format!(
            "{}x{} image with a {side}x{side} filter",
            img.width(),
            img.height()
        )));
    }

    let (w, h) = (img.width(), img.height());
    let gray = luma(img);
    let descs = descriptors(&gray, w, h, scales);

    // Canonical sample list: value-sorted, so any pixel permutation of the
    // image (a horizontal flip in particular) builds the same vocabulary.
    let mut order: Vec<usize> = (0..descs.len()).collect();
    order.sort_by(|&a, &b| {
        for (x, y) in descs[a].iter().zip(&descs[b]) {
            match x.total_cmp(y) {
                std::cmp::Ordering::Equal => continue,
                unequal => return unequal,
            }
        }
        std::cmp::Ordering::Equal
    });
    let stride = descs.len().div_ceil(params.max_samples).max(1);
    let samples: Vec<Vec<f64>> = order
        .iter()
        .step_by(stride)
        .map(|&i| descs[i].clone())
        .collect();

    let centers = kmeans(&samples, params.vocab, params.seed, params.iterations);

    let mut out = FeatureMap::zeros(params.vocab, w, h);
    for (i, d) in descs.iter().enumerate() {
        let mut best = 0;
        let mut best_d = dist2(d, &centers[0]);
        for (j, c) in centers.iter().enumerate().skip(1) {
            let dd = dist2(d, c);
            if dd < best_d {
                best = j;
                best_d = dd;
            }
        }
        out.set(best, i % w, i / w, 1.0);
    }
    Ok(out)
}
