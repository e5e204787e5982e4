//! Central finite-difference verification of the hand-written backward passes.
//!
//! Errors are reported as `|analytic − numeric| / max(|analytic|, |numeric|, floor)`
//! where `floor` keeps near-zero gradients from dominating the maximum.

use crate::error::Result;
use crate::layers::Layer;
use crate::network::Network;
use crate::tensor::{Rng, Tensor};
use crate::train::loss::{one_hot, softmax_cross_entropy};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub denominator_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { epsilon: 1e-5, denominator_floor: 1e-6 }
    }
}

/// Worst relative errors found by a check.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_input: f64,
    pub max_rel_param: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn max_rel(&self) -> f64 {
        self.max_rel_input.max(self.max_rel_param)
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Checks input and parameter gradients of one layer under the scalar loss
/// `Σ out ⊙ R`, with `R` a fixed random projection.
pub fn check_layer(layer: &Layer<f64>, x: &Tensor<f64>, rng: &mut Rng, config: GradCheckConfig) -> Result<GradCheckReport> {
    let out_dims = layer.spec().output_dims(x.dims())?;
    let proj: Vec<f64> = (0..out_dims.len()).map(|_| rng.standard_normal()).collect();
    let proj = Tensor::from_values(out_dims, proj)?;
    let loss = |layer: &Layer<f64>, x: &Tensor<f64>| -> Result<f64> {
        let y = layer.forward(x)?;
        Ok(y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum())
    };

    let (_, cache) = layer.forward_cached(x)?;
    let (dx, dparams) = layer.backward(&cache, &proj)?;
    let eps = config.epsilon;
    let mut report = GradCheckReport::default();

    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + eps;
        let plus = loss(layer, &xp)?;
        xp.data_mut()[i] = orig - eps;
        let minus = loss(layer, &xp)?;
        xp.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(dx.data()[i], numeric, config.denominator_floor);
        report.max_rel_input = report.max_rel_input.max(err);
        report.checked += 1;
    }

    let mut perturbed = layer.clone();
    for (p, grad) in dparams.iter().enumerate() {
        for i in 0..grad.len() {
            let orig = perturbed.params()[p].data()[i];
            perturbed.params_mut()[p].data_mut()[i] = orig + eps;
            let plus = loss(&perturbed, x)?;
            perturbed.params_mut()[p].data_mut()[i] = orig - eps;
            let minus = loss(&perturbed, x)?;
            perturbed.params_mut()[p].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(grad.data()[i], numeric, config.denominator_floor);
            report.max_rel_param = report.max_rel_param.max(err);
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Checks every parameter gradient of a whole network under mean
/// softmax cross-entropy against `labels`.
pub fn check_network(net: &Network<f64>, x: &Tensor<f64>, labels: &[usize], config: GradCheckConfig) -> Result<GradCheckReport> {
    let classes = net.num_outputs();
    let mut targets = Vec::with_capacity(labels.len() * classes);
    for &l in labels {
        targets.extend(one_hot(l, classes)?);
    }
    let loss = |net: &Network<f64>| -> Result<f64> {
        let logits = net.forward_logits(x)?;
        Ok(softmax_cross_entropy(&logits, &targets)?.loss)
    };

    let mut work = net.clone();
    let logits = work.forward_train(x)?;
    let batch = softmax_cross_entropy(&logits, &targets)?;
    let grads = work.backward(&batch.grad)?;

    let eps = config.epsilon;
    let mut report = GradCheckReport::default();
    let mut p = 0;
    for li in 0..work.layers().len() {
        let n_params = work.layers()[li].params().len();
        for pi in 0..n_params {
            let grad = &grads[p];
            for i in 0..grad.len() {
                let orig = get(&work, li, pi, i);
                set(&mut work, li, pi, i, orig + eps);
                let plus = loss(&work)?;
                set(&mut work, li, pi, i, orig - eps);
                let minus = loss(&work)?;
                set(&mut work, li, pi, i, orig);
                let numeric = (plus - minus) / (2.0 * eps);
                let err = relative_error(grad.data()[i], numeric, config.denominator_floor);
                report.max_rel_param = report.max_rel_param.max(err);
                report.checked += 1;
            }
            p += 1;
        }
    }
    Ok(report)
}

fn get(net: &Network<f64>, layer: usize, param: usize, i: usize) -> f64 {
    net.layers()[layer].params()[param].data()[i]
}

fn set(net: &mut Network<f64>, layer: usize, param: usize, i: usize, v: f64) {
    net.params_mut_at(layer, param).data_mut()[i] = v;
}
