use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::{Float, Tensor};

/// SGD with classical momentum: `v ← μv − lr·g; w ← w + v`.
#[derive(Debug, Clone)]
pub struct Sgd<T = f32> {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Tensor<T>>,
}

impl<T: Float> Sgd<T> {
    /// Zero velocities shaped like `params`.
    pub fn new<'a>(learning_rate: f64, momentum: f64, params: impl Iterator<Item = &'a Tensor<T>>) -> Self
    where
        T: 'a,
    {
        Sgd { learning_rate, momentum, velocity: params.map(Tensor::zeros_like).collect() }
    }

    pub fn for_network(net: &Network<T>, learning_rate: f64, momentum: f64) -> Self {
        Self::new(learning_rate, momentum, net.params())
    }

    pub fn velocity(&self) -> &[Tensor<T>] {
        &self.velocity
    }

    /// Updates `params` in place from `grads`, both in velocity order.
    pub fn step_params<'a>(&mut self, params: impl Iterator<Item = &'a mut Tensor<T>>, grads: &[Tensor<T>]) -> Result<()>
    where
        T: 'a,
    {
        if grads.len() != self.velocity.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.velocity.len()
            )));
        }
        let (lr, mu) = (T::from_f64(self.learning_rate), T::from_f64(self.momentum));
        let mut seen = 0;
        for ((w, v), g) in params.zip(&mut self.velocity).zip(grads) {
            if w.dims() != g.dims() || w.dims() != v.dims() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter {seen}: weight {}, velocity {}, gradient {}",
                    w.dims(),
                    v.dims(),
                    g.dims()
                )));
            }
            for ((wi, vi), &gi) in w.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *vi = mu * *vi - lr * gi;
                *wi += *vi;
            }
            seen += 1;
        }
        if seen != grads.len() {
            return Err(Error::ShapeMismatch(format!("{seen} parameters for {} gradients", grads.len())));
        }
        Ok(())
    }

    pub fn step(&mut self, net: &mut Network<T>, grads: &[Tensor<T>]) -> Result<()> {
        self.step_params(net.params_mut(), grads)
    }
}

/// One SGD step on every parameter of `net`.
pub fn sgd_step<T: Float>(net: &mut Network<T>, grads: &[Tensor<T>], state: &mut Sgd<T>) -> Result<()> {
    state.step(net, grads)
}

/// Cosine decay from `base` at step 0 to `min` at `total` steps.
pub fn cosine_lr(base: f64, min: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    let t = (step.min(total) as f64) / total as f64;
    min + 0.5 * (base - min) * (1.0 + (PI * t).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::full((1, 1, 1, 1), v).unwrap()
    }

    #[test]
    fn zero_learning_rate_freezes() {
        let mut w = vec![scalar(3.0)];
        let mut sgd = Sgd::new(0.0, 0.9, w.iter());
        for _ in 0..5 {
            sgd.step_params(w.iter_mut(), &[scalar(7.0)]).unwrap();
        }
        assert_eq!(w[0].data(), &[3.0]);
    }

    #[test]
    fn plain_gradient_step() {
        let mut w = vec![scalar(5.0)];
        let mut sgd = Sgd::new(1.0, 0.0, w.iter());
        sgd.step_params(w.iter_mut(), &[scalar(1.0)]).unwrap();
        assert_eq!(w[0].data(), &[4.0]);
    }

    #[test]
    fn quadratic_decays_geometrically() {
        let mut w = vec![scalar(1.0)];
        let mut sgd = Sgd::new(0.1, 0.0, w.iter());
        let mut prev = f64::INFINITY;
        for t in 1..=50 {
            let g = scalar(2.0 * w[0].data()[0]);
            sgd.step_params(w.iter_mut(), &[g]).unwrap();
            let v = w[0].data()[0];
            assert!((v - 0.8f64.powi(t)).abs() < 1e-12);
            assert!(v * v <= prev);
            prev = v * v;
        }
        assert!(w[0].data()[0] < 1e-4);
    }

    #[test]
    fn momentum_accumulates() {
        let mut w = vec![scalar(0.0)];
        let mut sgd = Sgd::new(1.0, 0.5, w.iter());
        sgd.step_params(w.iter_mut(), &[scalar(1.0)]).unwrap();
        sgd.step_params(w.iter_mut(), &[scalar(1.0)]).unwrap();
        assert_eq!(w[0].data(), &[-2.5]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut w = vec![scalar(0.0)];
        let mut sgd = Sgd::new(1.0, 0.0, w.iter());
        let g = Tensor::zeros((1, 1, 1, 2)).unwrap();
        assert!(sgd.step_params(w.iter_mut(), &[g]).is_err());
        assert!(sgd.step_params(w.iter_mut(), &[]).is_err());
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0.01, 1e-4, 0, 100), 0.01);
        assert!((cosine_lr(0.01, 1e-4, 100, 100) - 1e-4).abs() < 1e-15);
        assert!((cosine_lr(0.01, 1e-4, 50, 100) - (1e-4 + 0.5 * (0.01 - 1e-4))).abs() < 1e-15);
    }
}
