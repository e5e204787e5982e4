use std::f64::consts::PI;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

const NOISE_STD: f64 = 0.1;
const STRIPE_PERIOD: f64 = 6.0;

/// Procedural `K`-class dataset of `size × size` images.
///
/// Class `k` draws stripes at angle `π·k/K` with a random phase, plus a
/// bright blob placed on a ring at angle `2π·k/K` (jittered by up to one
/// pixel), then adds Gaussian noise with σ = 0.1 and clamps to `[0, 1]`.
/// Samples are interleaved by class; sample `i` of class `k` depends only on
/// `(seed, k, i)`.
pub fn synth(num_classes: usize, per_class: usize, size: usize, seed: u64) -> Result<Dataset> {
    if num_classes < 2 {
        return Err(Error::InvalidArgument(format!("synth needs at least 2 classes, got {num_classes}")));
    }
    if num_classes > 256 {
        return Err(Error::InvalidArgument(format!("synth supports at most 256 classes, got {num_classes}")));
    }
    if per_class == 0 {
        return Err(Error::EmptyDataset);
    }
    if size < 4 {
        return Err(Error::InvalidDims(format!("synth image size must be >= 4, got {size}")));
    }
    let mut images = Vec::with_capacity(num_classes * per_class);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for i in 0..per_class {
        for k in 0..num_classes {
            let mut rng = Rng::stream(seed, &[k as u64, i as u64]);
            images.push(Tensor::from_values((1, 1, size, size), pattern(k, num_classes, size, &mut rng))?);
            labels.push(k);
        }
    }
    Dataset::new(images, labels, num_classes, Vec::new())
}

fn pattern(k: usize, num_classes: usize, size: usize, rng: &mut Rng) -> Vec<f32> {
    let s = size as f64;
    let theta = PI * k as f64 / num_classes as f64;
    let (dir_y, dir_x) = theta.sin_cos();
    let phase = 2.0 * PI * rng.next_f64();
    let phi = 2.0 * PI * k as f64 / num_classes as f64;
    let centre = (s - 1.0) / 2.0;
    let blob_y = centre + 0.28 * s * phi.sin() + (2.0 * rng.next_f64() - 1.0);
    let blob_x = centre + 0.28 * s * phi.cos() + (2.0 * rng.next_f64() - 1.0);
    let sigma = s / 10.0;
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (fy, fx) = (y as f64, x as f64);
            let t = (fx - centre) * dir_x + (fy - centre) * dir_y;
            let stripes = 0.25 * (2.0 * PI * t / STRIPE_PERIOD + phase).sin();
            let d2 = (fy - blob_y).powi(2) + (fx - blob_x).powi(2);
            let blob = 0.4 * (-d2 / (2.0 * sigma * sigma)).exp();
            let v = 0.35 + stripes + blob + NOISE_STD * rng.standard_normal();
            out.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    out
}
