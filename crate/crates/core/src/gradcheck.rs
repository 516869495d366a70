//! Finite-difference verification suites for every analytic gradient in the
//! toolkit. Backing for the `gradcheck` CLI subcommand.
//!
//! Errors are normalized as `|analytic - numeric| / max(scale, floor)` where
//! `scale = max(|analytic|, |numeric|)` and `floor` absorbs the absolute
//! tolerance, so a suite passes iff its reported maximum is below the
//! relative tolerance.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::BoundingBox;
use crate::losses::{
    loss_cls, loss_cls_grad, loss_loc, loss_loc_grad, loss_mask, loss_mask_grad,
    BoxRegressionSample, ClassPrediction, MaskPredictionSample,
};
use crate::map::FeatureMap;
use crate::roi::{prroi_backward, prroi_forward, PoolResult, PoolSpec};

/// Relative tolerance for the box-coordinate and feature adjoint suites.
pub const POOL_REL_TOL: f64 = 1e-4;
/// Absolute floor under which differences are ignored.
pub const POOL_ABS_FLOOR: f64 = 1e-6;
/// Relative tolerance for the loss gradient suites.
pub const LOSS_REL_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub box_cases: usize,
    pub max_rel_error_box: f64,
    pub max_rel_error_features: f64,
    pub max_rel_error_losses: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error_box <= POOL_REL_TOL
            && self.max_rel_error_features <= POOL_REL_TOL
            && self.max_rel_error_losses <= LOSS_REL_TOL
    }
}

fn normalized_error(analytic: f64, numeric: f64, rel_tol: f64, abs_floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(abs_floor / rel_tol);
    (analytic - numeric).abs() / scale
}

fn random_map(rng: &mut impl Rng, channels: usize, w: usize, h: usize) -> FeatureMap {
    let values = (0..channels * w * h).map(|_| rng.random::<f64>()).collect();
    FeatureMap::new(channels, w, h, values).unwrap()
}

fn random_box(rng: &mut impl Rng) -> BoundingBox {
    let x1 = rng.random_range(-0.5..4.5);
    let y1 = rng.random_range(-0.5..4.5);
    let w = rng.random_range(0.8..3.5);
    let h = rng.random_range(0.8..3.5);
    BoundingBox::new(x1, y1, x1 + w, y1 + h).unwrap()
}

fn random_upstream(rng: &mut impl Rng, spec: &PoolSpec, channels: usize) -> PoolResult {
    let values = (0..spec.bins_x * spec.bins_y * channels)
        .map(|_| rng.random::<f64>())
        .collect();
    PoolResult::from_values(spec.bins_x, spec.bins_y, channels, values)
}

/// Scalar objective for the finite differences: upstream-weighted sum of the
/// pooled bins.
fn objective(f: &FeatureMap, b: &BoundingBox, spec: &PoolSpec, up: &PoolResult) -> f64 {
    let out = prroi_forward(f, b, spec).unwrap();
    out.values()
        .iter()
        .zip(up.values())
        .map(|(o, u)| o * u)
        .sum()
}

/// Checks the analytic box gradient against central differences on `cases`
/// random maps, boxes, grids, and upstream weights.
pub fn check_prroi_box_gradient(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let f = random_map(&mut rng, 2, 8, 8);
        let b = random_box(&mut rng);
        let spec = PoolSpec::prroi(rng.random_range(1..=4), rng.random_range(1..=4)).unwrap();
        let up = random_upstream(&mut rng, &spec, 2);
        let grads = prroi_backward(&f, &b, &spec, &up).unwrap();
        for coord in 0..4 {
            let shift = |delta: f64| {
                let mut c = [b.x1, b.y1, b.x2, b.y2];
                c[coord] += delta;
                BoundingBox::new(c[0], c[1], c[2], c[3]).unwrap()
            };
            let numeric = (objective(&f, &shift(step), &spec, &up)
                - objective(&f, &shift(-step), &spec, &up))
                / (2.0 * step);
            worst = worst.max(normalized_error(
                grads.d_box[coord],
                numeric,
                POOL_REL_TOL,
                POOL_ABS_FLOOR,
            ));
        }
    }
    worst
}

/// Checks the feature adjoint per element on small maps; the forward pass is
/// linear in the features, so central differences are exact up to rounding.
pub fn check_prroi_feature_gradient(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 1e-3;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let f = random_map(&mut rng, 1, 3, 3);
        let x1 = rng.random_range(-0.5..1.0);
        let y1 = rng.random_range(-0.5..1.0);
        let b = BoundingBox::new(
            x1,
            y1,
            x1 + rng.random_range(0.8..2.2),
            y1 + rng.random_range(0.8..2.2),
        )
        .unwrap();
        let spec = PoolSpec::prroi(2, 2).unwrap();
        let up = random_upstream(&mut rng, &spec, 1);
        let grads = prroi_backward(&f, &b, &spec, &up).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                let mut plus = f.clone();
                plus.set(0, x, y, f.get(0, x, y) + step);
                let mut minus = f.clone();
                minus.set(0, x, y, f.get(0, x, y) - step);
                let numeric = (objective(&plus, &b, &spec, &up)
                    - objective(&minus, &b, &spec, &up))
                    / (2.0 * step);
                worst = worst.max(normalized_error(
                    grads.d_features.get(0, x, y),
                    numeric,
                    POOL_REL_TOL,
                    POOL_ABS_FLOOR,
                ));
            }
        }
    }
    worst
}

/// Checks every loss gradient against central differences.
pub fn check_loss_gradients(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 1e-6;
    let mut worst = 0.0f64;
    let floor = 1e-9;

    for _ in 0..cases {
        // Classification: perturb the true-class probability directly; the
        // loss only reads that entry.
        let n = rng.random_range(2..5);
        let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = p.iter().sum();
        for v in p.iter_mut() {
            *v /= total;
        }
        let u = rng.random_range(0..n);
        let c = ClassPrediction::new(p.clone(), u).unwrap();
        let g = loss_cls_grad(&c).unwrap();
        let eval = |delta: f64| {
            let mut c = c.clone();
            c.probabilities[u] += delta;
            loss_cls(&c).unwrap()
        };
        let numeric = (eval(step) - eval(-step)) / (2.0 * step);
        worst = worst.max(normalized_error(g[u], numeric, LOSS_REL_TOL, floor));

        // Localization: keep differences away from the |x| = 1 joint so the
        // finite-difference window stays on one branch.
        let sample = |rng: &mut ChaCha8Rng| {
            let mut t = [0.0; 4];
            for v in t.iter_mut() {
                *v = loop {
                    let x: f64 = rng.random_range(-2.5..2.5);
                    if (x.abs() - 1.0).abs() > 1e-3 {
                        break x;
                    }
                };
            }
            t
        };
        let b = BoxRegressionSample::new(sample(&mut rng), [0.0; 4]).unwrap();
        for (i, analytic) in loss_loc_grad(&b).into_iter().enumerate() {
            let eval = |delta: f64| {
                let mut b = b;
                b.regressed[i] += delta;
                loss_loc(&b)
            };
            let numeric = (eval(step) - eval(-step)) / (2.0 * step);
            worst = worst.max(normalized_error(analytic, numeric, LOSS_REL_TOL, floor));
        }

        // Mask: perturb the probability at one pixel's true label.
        let pixels = rng.random_range(1..6);
        let mut probs = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..pixels {
            let a = rng.random_range(0.05..0.95);
            probs.extend_from_slice(&[a, 1.0 - a]);
            labels.push(rng.random_range(0..2));
        }
        let ms = MaskPredictionSample::new(2, probs, labels).unwrap();
        let g = loss_mask_grad(&ms).unwrap();
        let pix = rng.random_range(0..pixels);
        let slot = pix * 2 + ms.true_labels[pix];
        let eval = |delta: f64| {
            let mut ms = ms.clone();
            ms.probabilities[slot] += delta;
            loss_mask(&ms).unwrap()
        };
        let numeric = (eval(step) - eval(-step)) / (2.0 * step);
        worst = worst.max(normalized_error(g[slot], numeric, LOSS_REL_TOL, floor));
    }
    worst
}

/// Runs all suites.
pub fn run(seed: u64, cases: usize) -> GradCheckReport {
    GradCheckReport {
        box_cases: cases,
        max_rel_error_box: check_prroi_box_gradient(seed, cases),
        max_rel_error_features: check_prroi_feature_gradient(seed ^ 0x9e37_79b9, cases),
        max_rel_error_losses: check_loss_gradients(seed ^ 0x85eb_ca6b, cases),
    }
}
