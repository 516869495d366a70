//! Quadrature and finite-difference oracles for the RoI operators.
//!
//! The continuous field is re-implemented here from its definition (tent
//! interpolation around pixel centers with zero padding) without touching
//! the library's interpolation code, so the oracle stays independent of the
//! implementation path it checks.

use camomap::geometry::BoundingBox;
use camomap::map::FeatureMap;
use camomap::roi::{prroi_backward, prroi_forward, roi_align, PoolResult, PoolSpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent evaluation of the continuous extension: every pixel
/// contributes a separable tent of unit support centered at
/// `(j + 0.5, i + 0.5)`; outside contributions are zero.
fn field_at(f: &FeatureMap, c: usize, x: f64, y: f64) -> f64 {
    let j_lo = (x - 1.5).ceil() as i64;
    let i_lo = (y - 1.5).ceil() as i64;
    let mut total = 0.0;
    for j in j_lo..=j_lo + 1 {
        let wx = 1.0 - (x - (j as f64 + 0.5)).abs();
        if wx <= 0.0 || j < 0 || j >= f.width() as i64 {
            continue;
        }
        for i in i_lo..=i_lo + 1 {
            let wy = 1.0 - (y - (i as f64 + 0.5)).abs();
            if wy <= 0.0 || i < 0 || i >= f.height() as i64 {
                continue;
            }
            total += wx * wy * f.get(c, j as usize, i as usize);
        }
    }
    total
}

/// Midpoint Riemann average of the field over one bin.
fn riemann_bin_average(
    f: &FeatureMap,
    c: usize,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    samples: usize,
) -> f64 {
    let n = samples as f64;
    let mut total = 0.0;
    for sy in 0..samples {
        let y = y1 + (sy as f64 + 0.5) / n * (y2 - y1);
        for sx in 0..samples {
            let x = x1 + (sx as f64 + 0.5) / n * (x2 - x1);
            total += field_at(f, c, x, y);
        }
    }
    total / (n * n)
}

fn riemann_pool(f: &FeatureMap, b: &BoundingBox, spec: &PoolSpec, samples: usize) -> Vec<f64> {
    let bw = b.width() / spec.bins_x as f64;
    let bh = b.height() / spec.bins_y as f64;
    let mut out = Vec::new();
    for gy in 0..spec.bins_y {
        for gx in 0..spec.bins_x {
            let x1 = b.x1 + gx as f64 * bw;
            let y1 = b.y1 + gy as f64 * bh;
            for c in 0..f.channels() {
                out.push(riemann_bin_average(f, c, x1, y1, x1 + bw, y1 + bh, samples));
            }
        }
    }
    out
}

fn random_map(rng: &mut impl Rng, channels: usize, w: usize, h: usize) -> FeatureMap {
    let values = (0..channels * w * h).map(|_| rng.random::<f64>()).collect();
    FeatureMap::new(channels, w, h, values).unwrap()
}

fn random_box(rng: &mut impl Rng) -> BoundingBox {
    let x1 = rng.random_range(-0.5..4.5);
    let y1 = rng.random_range(-0.5..4.5);
    let w = rng.random_range(0.8..4.0);
    let h = rng.random_range(0.8..4.0);
    BoundingBox::new(x1, y1, x1 + w, y1 + h).unwrap()
}

/// 20-case smoke version of the acceptance-level Riemann check.
#[test]
fn prroi_matches_riemann_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let f = random_map(&mut rng, 2, 8, 8);
        let b = random_box(&mut rng);
        let spec = PoolSpec::prroi(rng.random_range(2..=4), rng.random_range(2..=4)).unwrap();
        let exact = prroi_forward(&f, &b, &spec).unwrap();
        let oracle = riemann_pool(&f, &b, &spec, 512);
        for (e, o) in exact.values().iter().zip(&oracle) {
            worst = worst.max((e - o).abs());
        }
    }
    assert!(worst < 1e-6, "max |prroi - riemann| = {worst:.3e}");
}

#[test]
fn roi_align_error_shrinks_monotonically() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut errors = vec![0.0f64; 5];
    for _ in 0..6 {
        let f = random_map(&mut rng, 2, 8, 8);
        let b = random_box(&mut rng);
        let spec = PoolSpec::prroi(3, 3).unwrap();
        let exact = prroi_forward(&f, &b, &spec).unwrap();
        for (slot, n) in [1usize, 2, 4, 8, 16].into_iter().enumerate() {
            let approx = roi_align(&f, &b, &spec, n).unwrap();
            let err = approx
                .values()
                .iter()
                .zip(exact.values())
                .map(|(a, e)| (a - e).abs())
                .fold(0.0, f64::max);
            errors[slot] = errors[slot].max(err);
        }
    }
    for w in errors.windows(2) {
        assert!(w[1] <= w[0] + 1e-15, "errors not monotone: {errors:?}");
    }
}

fn objective(f: &FeatureMap, b: &BoundingBox, spec: &PoolSpec, up: &PoolResult) -> f64 {
    prroi_forward(f, b, spec)
        .unwrap()
        .values()
        .iter()
        .zip(up.values())
        .map(|(o, u)| o * u)
        .sum()
}

/// Independent central-difference check of the box gradient (the library has
/// its own gradcheck module; this one re-derives the objective here).
#[test]
fn prroi_box_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let step = 1e-5;
    for _ in 0..25 {
        let f = random_map(&mut rng, 2, 8, 8);
        let b = random_box(&mut rng);
        let spec = PoolSpec::prroi(rng.random_range(1..=3), rng.random_range(1..=3)).unwrap();
        let up_values = (0..spec.bins_x * spec.bins_y * 2)
            .map(|_| rng.random::<f64>())
            .collect();
        let up = PoolResult::from_values(spec.bins_x, spec.bins_y, 2, up_values);
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
            let analytic = grads.d_box[coord];
            let tol = 1e-6f64.max(1e-4 * analytic.abs().max(numeric.abs()));
            assert!(
                (analytic - numeric).abs() <= tol,
                "coord {coord}: analytic {analytic} vs numeric {numeric}"
            );
        }
    }
}

/// The forward pass is linear in the features, so differences are exact.
#[test]
fn prroi_feature_gradient_matches_differences_on_3x3() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let f = random_map(&mut rng, 1, 3, 3);
        let x1 = rng.random_range(-0.5..1.0);
        let y1 = rng.random_range(-0.5..1.0);
        let b = BoundingBox::new(
            x1,
            y1,
            x1 + rng.random_range(0.8..2.5),
            y1 + rng.random_range(0.8..2.5),
        )
        .unwrap();
        let spec = PoolSpec::prroi(2, 2).unwrap();
        let up = PoolResult::from_values(2, 2, 1, (0..4).map(|_| rng.random::<f64>()).collect());
        let grads = prroi_backward(&f, &b, &spec, &up).unwrap();
        let step = 1e-3;
        for y in 0..3 {
            for x in 0..3 {
                let mut plus = f.clone();
                plus.set(0, x, y, f.get(0, x, y) + step);
                let mut minus = f.clone();
                minus.set(0, x, y, f.get(0, x, y) - step);
                let numeric = (objective(&plus, &b, &spec, &up)
                    - objective(&minus, &b, &spec, &up))
                    / (2.0 * step);
                let analytic = grads.d_features.get(0, x, y);
                assert!(
                    (analytic - numeric).abs() < 1e-9,
                    "({x},{y}): {analytic} vs {numeric}"
                );
            }
        }
    }
}
