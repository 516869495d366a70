//! Multi-task detection losses as standalone differentiable scalar functions.
//!
//! The total loss is the unweighted sum of a classification term (multinomial
//! cross entropy on the box class), a localization term (smooth L1 on the
//! four box offsets), and a mask term (mean cross entropy over the pixels of
//! one RoI). Natural logarithms throughout. Probability clamping is the
//! caller's responsibility: exact zeros at a true label are reported as
//! errors instead of being silently clamped.
//!
//! No optimizer or training loop ships here. For the record, the reference
//! training recipe for networks using this loss is SGD with momentum 0.9 and
//! weight decay 1e-4, mini-batches of 256, base learning rate 0.00125 over
//! 120k iterations, decayed 10x at 80k and again at 100k.

use crate::error::{Error, Result};

/// Softmax output over classes together with the true class index.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrediction {
    pub probabilities: Vec<f64>,
    pub true_class: usize,
}

impl ClassPrediction {
    pub fn new(probabilities: Vec<f64>, true_class: usize) -> Result<Self> {
        if true_class >= probabilities.len() {
            return Err(Error::InvalidInput(format!(
                "true class {true_class} out of range for {} classes",
                probabilities.len()
            )));
        }
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::OutOfRange(
                "class probabilities must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "class probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            probabilities,
            true_class,
        })
    }
}

/// Regressed and ground-truth box offsets in (x, y, w, h) parameterization.
/// The encoding is treated as opaque; only the componentwise differences
/// enter the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxRegressionSample {
    pub regressed: [f64; 4],
    pub target: [f64; 4],
}

impl BoxRegressionSample {
    pub fn new(regressed: [f64; 4], target: [f64; 4]) -> Result<Self> {
        if regressed
            .iter()
            .chain(target.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput("box offsets must be finite".into()));
        }
        Ok(Self { regressed, target })
    }
}

/// Per-pixel softmax outputs inside one RoI with the true label per pixel.
/// `probabilities` is row-major `pixel * num_labels + label`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPredictionSample {
    pub num_labels: usize,
    pub probabilities: Vec<f64>,
    pub true_labels: Vec<usize>,
}

impl MaskPredictionSample {
    pub fn new(
        num_labels: usize,
        probabilities: Vec<f64>,
        true_labels: Vec<usize>,
    ) -> Result<Self> {
        if num_labels == 0 || true_labels.is_empty() {
            return Err(Error::InvalidInput(
                "mask sample needs at least one pixel and one label".into(),
            ));
        }
        if probabilities.len() != num_labels * true_labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} probabilities, got {}",
                num_labels * true_labels.len(),
                probabilities.len()
            )));
        }
        for (i, row) in probabilities.chunks(num_labels).enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "pixel {i} probabilities sum to {sum}, expected 1"
                )));
            }
        }
        if let Some(&s) = true_labels.iter().find(|&&s| s >= num_labels) {
            return Err(Error::InvalidInput(format!(
                "true label {s} out of range for {num_labels} labels"
            )));
        }
        Ok(Self {
            num_labels,
            probabilities,
            true_labels,
        })
    }

    pub fn num_pixels(&self) -> usize {
        self.true_labels.len()
    }

    fn prob_at_true(&self, pixel: usize) -> f64 {
        self.probabilities[pixel * self.num_labels + self.true_labels[pixel]]
    }
}

/// The three loss terms and their unweighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_cls: f64,
    pub l_loc: f64,
    pub l_mask: f64,
    pub total: f64,
}

/// Classification loss `-ln(p_u)`.
pub fn loss_cls(c: &ClassPrediction) -> Result<f64> {
    let p = c.probabilities[c.true_class];
    if p == 0.0 {
        return Err(Error::InfiniteLoss);
    }
    Ok(-p.ln())
}

/// Gradient of [`loss_cls`] with respect to the probability vector:
/// `-1/p_u` at the true class, zero elsewhere.
pub fn loss_cls_grad(c: &ClassPrediction) -> Result<Vec<f64>> {
    let p = c.probabilities[c.true_class];
    if p == 0.0 {
        return Err(Error::InfiniteLoss);
    }
    let mut g = vec![0.0; c.probabilities.len()];
    g[c.true_class] = -1.0 / p;
    Ok(g)
}

/// `0.5 x²` for `|x| < 1`, otherwise `|x| - 0.5`. C¹ everywhere.
pub fn smooth_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

/// Derivative of [`smooth_l1`]: `x` inside the quadratic zone, `sign(x)`
/// outside.
pub fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

/// Localization loss: smooth L1 summed over the four offset components.
pub fn loss_loc(b: &BoxRegressionSample) -> f64 {
    b.regressed
        .iter()
        .zip(b.target.iter())
        .map(|(t, v)| smooth_l1(t - v))
        .sum()
}

/// Gradient of [`loss_loc`] with respect to the regressed offsets.
pub fn loss_loc_grad(b: &BoxRegressionSample) -> [f64; 4] {
    std::array::from_fn(|i| smooth_l1_grad(b.regressed[i] - b.target[i]))
}

/// Mask loss: mean `-ln(m_i)` of the probability at each pixel's true label.
pub fn loss_mask(ms: &MaskPredictionSample) -> Result<f64> {
    let n = ms.num_pixels() as f64;
    let mut total = 0.0;
    for i in 0..ms.num_pixels() {
        let p = ms.prob_at_true(i);
        if p == 0.0 {
            return Err(Error::InfiniteLoss);
        }
        total -= p.ln();
    }
    Ok(total / n)
}

/// Gradient of [`loss_mask`] with respect to every per-pixel probability:
/// `-1/(N p)` at each pixel's true label, zero elsewhere.
pub fn loss_mask_grad(ms: &MaskPredictionSample) -> Result<Vec<f64>> {
    let n = ms.num_pixels() as f64;
    let mut g = vec![0.0; ms.probabilities.len()];
    for i in 0..ms.num_pixels() {
        let p = ms.prob_at_true(i);
        if p == 0.0 {
            return Err(Error::InfiniteLoss);
        }
        g[i * ms.num_labels + ms.true_labels[i]] = -1.0 / (n * p);
    }
    Ok(g)
}

/// Total multi-task loss: the unweighted sum of the three terms.
pub fn loss_total(
    c: &ClassPrediction,
    b: &BoxRegressionSample,
    ms: &MaskPredictionSample,
) -> Result<LossBreakdown> {
    let l_cls = loss_cls(c)?;
    let l_loc = loss_loc(b);
    let l_mask = loss_mask(ms)?;
    Ok(LossBreakdown {
        l_cls,
        l_loc,
        l_mask,
        total: l_cls + l_loc + l_mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cls_examples() {
        let c = ClassPrediction::new(vec![0.0, 1.0], 1).unwrap();
        assert_eq!(loss_cls(&c).unwrap(), 0.0);
        let c = ClassPrediction::new(vec![0.5, 0.5], 0).unwrap();
        assert!((loss_cls(&c).unwrap() - 0.5f64.ln().abs()).abs() < 1e-12);
        let c = ClassPrediction::new(vec![0.1, 0.9], 1).unwrap();
        assert!((loss_cls(&c).unwrap() - 0.105_360_5).abs() < 1e-6);
    }

    #[test]
    fn cls_zero_probability_is_error() {
        let c = ClassPrediction::new(vec![1.0, 0.0], 1).unwrap();
        assert!(matches!(loss_cls(&c), Err(Error::InfiniteLoss)));
    }

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(0.0), 0.0);
        assert_eq!(smooth_l1(0.5), 0.125);
        assert_eq!(smooth_l1(2.0), 1.5);
        assert_eq!(smooth_l1(-2.0), 1.5);
    }

    #[test]
    fn smooth_l1_derivative_continuous_at_one() {
        // Left and right derivatives at |x| = 1 both have magnitude 1.
        let eps = 1e-9;
        assert!((smooth_l1_grad(1.0 - eps) - 1.0).abs() < 1e-6);
        assert!((smooth_l1_grad(1.0 + eps) - 1.0).abs() < 1e-6);
        assert!((smooth_l1_grad(-1.0 - eps) + 1.0).abs() < 1e-6);
        assert!((smooth_l1_grad(-1.0 + eps) + 1.0).abs() < 1e-6);
    }

    #[test]
    fn loc_examples() {
        let b = BoxRegressionSample::new([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(loss_loc(&b), 0.0);
        let b = BoxRegressionSample::new([0.5, 0.0, 0.0, 0.0], [0.0; 4]).unwrap();
        assert_eq!(loss_loc(&b), 0.125);
        let b = BoxRegressionSample::new([2.0; 4], [0.0; 4]).unwrap();
        assert_eq!(loss_loc(&b), 6.0);
    }

    #[test]
    #[allow(clippy::approx_constant)] // frozen expected values
    fn mask_examples() {
        let ms = MaskPredictionSample::new(2, vec![0.0, 1.0, 0.0, 1.0], vec![1, 1]).unwrap();
        assert_eq!(loss_mask(&ms).unwrap(), 0.0);
        let ms = MaskPredictionSample::new(2, vec![0.5, 0.5, 0.5, 0.5], vec![0, 1]).unwrap();
        assert!((loss_mask(&ms).unwrap() - 0.693_147_18).abs() < 1e-6);
        let ms = MaskPredictionSample::new(
            2,
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.5, 0.5],
            vec![0, 0, 0, 0],
        )
        .unwrap();
        assert!((loss_mask(&ms).unwrap() - 0.173_286_79).abs() < 1e-6);
    }

    #[test]
    fn mask_mean_is_invariant_to_duplication() {
        let ms = MaskPredictionSample::new(2, vec![0.8, 0.2, 0.3, 0.7], vec![0, 1]).unwrap();
        let doubled = MaskPredictionSample::new(
            2,
            vec![0.8, 0.2, 0.3, 0.7, 0.8, 0.2, 0.3, 0.7],
            vec![0, 1, 0, 1],
        )
        .unwrap();
        assert!((loss_mask(&ms).unwrap() - loss_mask(&doubled).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn total_is_sum_of_parts() {
        let c = ClassPrediction::new(vec![0.5, 0.5], 0).unwrap();
        let b = BoxRegressionSample::new([0.5, 0.0, 0.0, 0.0], [0.0; 4]).unwrap();
        let ms = MaskPredictionSample::new(2, vec![0.5, 0.5, 0.5, 0.5], vec![0, 1]).unwrap();
        let l = loss_total(&c, &b, &ms).unwrap();
        assert!((l.total - (l.l_cls + l.l_loc + l.l_mask)).abs() < 1e-12);
        assert!((l.total - 1.511_3).abs() < 1e-4);
    }

    #[test]
    fn losses_are_nonnegative() {
        let c = ClassPrediction::new(vec![0.25, 0.25, 0.5], 0).unwrap();
        assert!(loss_cls(&c).unwrap() >= 0.0);
        let b = BoxRegressionSample::new([-3.0, 0.2, 0.0, 1.0], [0.0; 4]).unwrap();
        assert!(loss_loc(&b) >= 0.0);
        let ms = MaskPredictionSample::new(2, vec![0.9, 0.1, 0.2, 0.8], vec![0, 0]).unwrap();
        assert!(loss_mask(&ms).unwrap() >= 0.0);
    }
}
