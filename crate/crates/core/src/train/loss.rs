//! Cross-entropy with label smoothing, and the fused softmax + CE gradient.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::layers::activation_softmax_in_place;
use crate::tensor::{Float, Tensor};

/// Floor applied inside `log` so a zero probability yields a large finite loss.
pub const LOG_FLOOR: f64 = 1e-12;

static LOG_FLOOR_HITS: AtomicUsize = AtomicUsize::new(0);

/// Number of times, process-wide, a positive-target probability fell below
/// [`LOG_FLOOR`] and was clamped.
pub fn log_floor_hits() -> usize {
    LOG_FLOOR_HITS.load(Ordering::Relaxed)
}

/// Label-smoothing settings: factor `alpha` over `classes` classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub classes: usize,
}

impl LossConfig {
    pub fn new(alpha: f64, classes: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("label smoothing alpha must be in [0, 1), got {alpha}")));
        }
        if classes < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 classes, got {classes}")));
        }
        Ok(LossConfig { alpha, classes })
    }

    /// Smoothed target for one class index.
    pub fn target(&self, label: usize) -> Result<Vec<f64>> {
        smooth_labels(&one_hot(label, self.classes)?, self.alpha, self.classes)
    }
}

pub fn one_hot(label: usize, classes: usize) -> Result<Vec<f64>> {
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, num_classes: classes });
    }
    let mut v = vec![0.0; classes];
    v[label] = 1.0;
    Ok(v)
}

/// `(1 − α)·y_hot + α/K`, elementwise.
pub fn smooth_labels(y_hot: &[f64], alpha: f64, classes: usize) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("label smoothing alpha must be in [0, 1), got {alpha}")));
    }
    if y_hot.len() != classes {
        return Err(Error::ShapeMismatch(format!(
            "target has {} entries for {classes} classes",
            y_hot.len()
        )));
    }
    let ones = y_hot.iter().filter(|&&v| v == 1.0).count();
    let zeros = y_hot.iter().filter(|&&v| v == 0.0).count();
    if ones != 1 || ones + zeros != classes {
        return Err(Error::InvalidArgument("smooth_labels expects a one-hot vector".into()));
    }
    let uniform = alpha / classes as f64;
    Ok(y_hot.iter().map(|&y| (1.0 - alpha) * y + uniform).collect())
}

/// `−Σ yᵢ·log(ŷᵢ)`, with `ŷᵢ` floored at [`LOG_FLOOR`].
pub fn cross_entropy<T: Float>(y: &[T], y_pred: &[T]) -> Result<T> {
    if y.len() != y_pred.len() {
        return Err(Error::ShapeMismatch(format!(
            "cross_entropy: {} targets vs {} predictions",
            y.len(),
            y_pred.len()
        )));
    }
    Ok(ce_unchecked(y, y_pred))
}

fn ce_unchecked<T: Float>(y: &[T], y_pred: &[T]) -> T {
    let floor = T::from_f64(LOG_FLOOR);
    let mut loss = T::ZERO;
    for (&t, &p) in y.iter().zip(y_pred) {
        if t != T::ZERO {
            if p < floor {
                LOG_FLOOR_HITS.fetch_add(1, Ordering::Relaxed);
            }
            loss -= t * p.max(floor).ln();
        }
    }
    loss
}

/// Result of [`softmax_cross_entropy`] over a batch.
#[derive(Debug, Clone)]
pub struct BatchLoss<T> {
    /// Mean loss over the batch.
    pub loss: T,
    /// Per-sample losses.
    pub per_sample: Vec<T>,
    /// Softmax probabilities, same dims as the logits.
    pub probs: Tensor<T>,
    /// Gradient of the mean loss with respect to the logits, `(ŷ − y) / N`.
    pub grad: Tensor<T>,
}

/// Softmax over each sample's logits, then cross-entropy against `targets`
/// (row-major `N × K`).
pub fn softmax_cross_entropy<T: Float>(logits: &Tensor<T>, targets: &[T]) -> Result<BatchLoss<T>> {
    let n = logits.dims().n;
    let k = logits.dims().sample_len();
    if targets.len() != n * k {
        return Err(Error::ShapeMismatch(format!(
            "{} targets for {n} samples of {k} classes",
            targets.len()
        )));
    }
    let mut probs = logits.clone();
    for row in probs.data_mut().chunks_exact_mut(k) {
        activation_softmax_in_place(row);
    }
    let per_sample: Vec<T> = probs
        .data()
        .chunks_exact(k)
        .zip(targets.chunks_exact(k))
        .map(|(p, t)| ce_unchecked(t, p))
        .collect();
    let count = T::from_usize(n);
    let loss = per_sample.iter().copied().sum::<T>() / count;
    let mut grad = probs.clone();
    for (g, &t) in grad.data_mut().iter_mut().zip(targets) {
        *g = (*g - t) / count;
    }
    Ok(BatchLoss { loss, per_sample, probs, grad })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_zero_is_identity() {
        let y = one_hot(3, 10).unwrap();
        assert_eq!(smooth_labels(&y, 0.0, 10).unwrap(), y);
    }

    #[test]
    fn alpha_point_one_over_ten_classes() {
        let y = smooth_labels(&one_hot(0, 10).unwrap(), 0.1, 10).unwrap();
        assert_eq!(y[0], 0.91);
        for &v in &y[1..] {
            assert_eq!(v, 0.01);
        }
    }

    #[test]
    fn smoothing_sums_to_one_on_grid() {
        for k in 2..=20 {
            for step in 0..20 {
                let alpha = step as f64 * 0.05;
                for label in [0, k - 1, k / 2] {
                    let y = smooth_labels(&one_hot(label, k).unwrap(), alpha, k).unwrap();
                    let sum: f64 = y.iter().sum();
                    assert!((sum - 1.0).abs() < 1e-12, "k={k} alpha={alpha}: {sum}");
                    if alpha > 0.0 {
                        assert!(y.iter().all(|&v| v > 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn smoothing_rejects_bad_input() {
        assert!(smooth_labels(&[0.5, 0.5], 0.1, 2).is_err());
        assert!(smooth_labels(&[1.0, 0.0], 1.0, 2).is_err());
        assert!(smooth_labels(&[1.0, 0.0], -0.1, 2).is_err());
        assert!(smooth_labels(&[1.0, 0.0, 0.0], 0.1, 2).is_err());
        assert!(matches!(one_hot(10, 10), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn uniform_prediction_gives_ln_k() {
        let y = one_hot(4, 10).unwrap();
        let p = vec![0.1; 10];
        let loss = cross_entropy(&y, &p).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn perfect_prediction_gives_zero() {
        let y = one_hot(1, 3).unwrap();
        assert_eq!(cross_entropy(&y, &[0.0, 1.0, 0.0]).unwrap(), 0.0);
        let near = cross_entropy(&y, &[1e-9, 1.0 - 2e-9, 1e-9]).unwrap();
        assert!((0.0..1e-8).contains(&near));
    }

    #[test]
    fn log_floor_keeps_loss_finite() {
        let before = log_floor_hits();
        let loss = cross_entropy(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap();
        assert!((loss + LOG_FLOOR.ln()).abs() < 1e-9);
        assert!(log_floor_hits() > before);
    }

    #[test]
    fn fused_gradient_matches_finite_differences() {
        let mut rng = crate::tensor::Rng::new(21);
        for _ in 0..20 {
            let k = 2 + rng.below(9);
            let n = 1 + rng.below(4);
            let logits: Vec<f64> = (0..n * k).map(|_| rng.uniform(-3.0, 3.0).unwrap()).collect();
            let mut targets = Vec::new();
            for _ in 0..n {
                targets.extend(smooth_labels(&one_hot(rng.below(k), k).unwrap(), 0.1, k).unwrap());
            }
            let t = Tensor::from_values((n, k, 1, 1), logits.clone()).unwrap();
            let analytic = softmax_cross_entropy(&t, &targets).unwrap().grad;
            let eps = 1e-5;
            for i in 0..n * k {
                let eval = |delta: f64| {
                    let mut l = logits.clone();
                    l[i] += delta;
                    let t = Tensor::from_values((n, k, 1, 1), l).unwrap();
                    softmax_cross_entropy(&t, &targets).unwrap().loss
                };
                let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
                let a = analytic.data()[i];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(rel < 1e-6, "rel {rel}: {a} vs {numeric}");
            }
        }
    }

    #[test]
    fn mixed_target_loss_is_linear_in_target() {
        let mut rng = crate::tensor::Rng::new(5);
        for _ in 0..100 {
            let k = 10;
            let logits: Vec<f64> = (0..k).map(|_| rng.uniform(-2.0, 2.0).unwrap()).collect();
            let t = Tensor::from_values((1, k, 1, 1), logits).unwrap();
            let yi = one_hot(rng.below(k), k).unwrap();
            let yj = one_hot(rng.below(k), k).unwrap();
            let delta = rng.next_f64();
            let mixed: Vec<f64> = yi.iter().zip(&yj).map(|(a, b)| delta * a + (1.0 - delta) * b).collect();
            let l_mixed = softmax_cross_entropy(&t, &mixed).unwrap().loss;
            let li = softmax_cross_entropy(&t, &yi).unwrap().loss;
            let lj = softmax_cross_entropy(&t, &yj).unwrap().loss;
            assert!((l_mixed - (delta * li + (1.0 - delta) * lj)).abs() < 1e-9);
        }
    }
}
