//! Seeded image augmentations for `(1, 1, h, w)` grayscale tensors in `[0, 1]`,
//! and mixup.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{resize_bilinear, sample_bilinear, Border};
use crate::tensor::{Float, Rng, Tensor};

/// An augmentation and its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentKind {
    HFlip,
    VFlip,
    /// Uniform angle in `±max_degrees`, bilinear, reflect border.
    Rotation { max_degrees: f64 },
    /// 3×3 Gaussian with σ uniform in `[sigma_min, sigma_max]`.
    GaussianBlur { sigma_min: f64, sigma_max: f64 },
    /// Shift by up to `max_shift` of the side, scale by `1 ± max_scale`, rotate by `±max_degrees`.
    ShiftScaleRotate { max_shift: f64, max_scale: f64, max_degrees: f64 },
    /// Crops a random window of `scale` times each side, resized back.
    RandomCrop { scale: f64 },
    /// Adds a uniform offset in `±brightness`, stretches about the image
    /// mean by a factor in `1 ± contrast`.
    BrightnessContrast { brightness: f64, contrast: f64 },
    /// Zeroes a random `size × size` square lying inside the image.
    Cutout { size: usize },
}

impl AugmentKind {
    pub const NAMES: [&'static str; 8] = [
        "hflip",
        "vflip",
        "rotation",
        "gaussian_blur",
        "shift_scale_rotate",
        "random_crop",
        "brightness_contrast",
        "cutout",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AugmentKind::HFlip => "hflip",
            AugmentKind::VFlip => "vflip",
            AugmentKind::Rotation { .. } => "rotation",
            AugmentKind::GaussianBlur { .. } => "gaussian_blur",
            AugmentKind::ShiftScaleRotate { .. } => "shift_scale_rotate",
            AugmentKind::RandomCrop { .. } => "random_crop",
            AugmentKind::BrightnessContrast { .. } => "brightness_contrast",
            AugmentKind::Cutout { .. } => "cutout",
        }
    }

    fn validate(&self, h: usize, w: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("{}: {msg}", self.name())));
        match *self {
            AugmentKind::HFlip | AugmentKind::VFlip => Ok(()),
            AugmentKind::Rotation { max_degrees: d } if !(0.0..=180.0).contains(&d) => {
                bad(format!("max_degrees {d} outside [0, 180]"))
            }
            AugmentKind::GaussianBlur { sigma_min, sigma_max } if !(sigma_min > 0.0 && sigma_min <= sigma_max) => {
                bad(format!("sigma range [{sigma_min}, {sigma_max}] invalid"))
            }
            AugmentKind::ShiftScaleRotate { max_shift, max_scale, max_degrees }
                if !((0.0..1.0).contains(&max_shift)
                    && (0.0..1.0).contains(&max_scale)
                    && (0.0..=180.0).contains(&max_degrees)) =>
            {
                bad(format!("shift {max_shift}, scale {max_scale}, degrees {max_degrees} out of range"))
            }
            AugmentKind::RandomCrop { scale } if !(scale > 0.0 && scale <= 1.0) => {
                bad(format!("scale {scale} outside (0, 1]"))
            }
            AugmentKind::BrightnessContrast { brightness, contrast }
                if !((0.0..=1.0).contains(&brightness) && (0.0..1.0).contains(&contrast)) =>
            {
                bad(format!("brightness {brightness}, contrast {contrast} out of range"))
            }
            AugmentKind::Cutout { size } if size == 0 || size > h || size > w => {
                bad(format!("size {size} does not fit a {h}x{w} image"))
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for AugmentKind {
    type Err = Error;

    /// Parses a name into the kind with its default parameters.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "hflip" => AugmentKind::HFlip,
            "vflip" => AugmentKind::VFlip,
            "rotation" => AugmentKind::Rotation { max_degrees: 15.0 },
            "gaussian_blur" => AugmentKind::GaussianBlur { sigma_min: 0.1, sigma_max: 1.0 },
            "shift_scale_rotate" => AugmentKind::ShiftScaleRotate { max_shift: 0.0625, max_scale: 0.1, max_degrees: 15.0 },
            "random_crop" => AugmentKind::RandomCrop { scale: 0.85 },
            "brightness_contrast" => AugmentKind::BrightnessContrast { brightness: 0.2, contrast: 0.2 },
            "cutout" => AugmentKind::Cutout { size: 5 },
            _ => return Err(Error::UnknownAugmentation(s.to_string())),
        })
    }
}

impl fmt::Display for AugmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An augmentation applied with a given probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentOp {
    pub kind: AugmentKind,
    pub probability: f64,
}

impl AugmentOp {
    pub fn new(kind: AugmentKind, probability: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(Error::InvalidArgument(format!("{kind}: probability {probability} outside [0, 1]")));
        }
        Ok(AugmentOp { kind, probability })
    }

    /// Applies the op when a uniform draw falls below the probability,
    /// otherwise returns the image unchanged.
    pub fn apply(&self, image: &Tensor<f32>, rng: &mut Rng) -> Result<Tensor<f32>> {
        let d = image.dims();
        if (d.n, d.c) != (1, 1) {
            return Err(Error::ShapeMismatch(format!("augmentations take (1, 1, h, w) images, got {d}")));
        }
        self.kind.validate(d.h, d.w)?;
        if rng.next_f64() >= self.probability {
            return Ok(image.clone());
        }
        let (h, w) = (d.h, d.w);
        let src = image.data();
        let out = match self.kind {
            AugmentKind::HFlip => flip(src, h, w, false),
            AugmentKind::VFlip => flip(src, h, w, true),
            AugmentKind::Rotation { max_degrees } => {
                let angle = symmetric(rng, max_degrees);
                affine(src, h, w, angle, 1.0, 0.0, 0.0)
            }
            AugmentKind::GaussianBlur { sigma_min, sigma_max } => {
                let sigma = if sigma_max > sigma_min { rng.uniform(sigma_min, sigma_max)? } else { sigma_min };
                gaussian_blur(src, h, w, sigma)
            }
            AugmentKind::ShiftScaleRotate { max_shift, max_scale, max_degrees } => {
                let dy = symmetric(rng, max_shift) * h as f64;
                let dx = symmetric(rng, max_shift) * w as f64;
                let scale = 1.0 + symmetric(rng, max_scale);
                let angle = symmetric(rng, max_degrees);
                affine(src, h, w, angle, scale, dy, dx)
            }
            AugmentKind::RandomCrop { scale } => {
                let ch = ((scale * h as f64).round() as usize).clamp(1, h);
                let cw = ((scale * w as f64).round() as usize).clamp(1, w);
                let top = rng.below(h - ch + 1);
                let left = rng.below(w - cw + 1);
                let mut crop = Vec::with_capacity(ch * cw);
                for r in top..top + ch {
                    crop.extend_from_slice(&src[r * w + left..r * w + left + cw]);
                }
                resize_bilinear(&crop, ch, cw, h, w)
            }
            AugmentKind::BrightnessContrast { brightness, contrast } => {
                let b = symmetric(rng, brightness) as f32;
                let c = (1.0 + symmetric(rng, contrast)) as f32;
                let mean = src.iter().sum::<f32>() / src.len() as f32;
                src.iter().map(|&v| (v - mean) * c + mean + b).collect()
            }
            AugmentKind::Cutout { size } => {
                let top = rng.below(h - size + 1);
                let left = rng.below(w - size + 1);
                let mut out = src.to_vec();
                for r in top..top + size {
                    out[r * w + left..r * w + left + size].fill(0.0);
                }
                out
            }
        };
        let out = out.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Tensor::from_values(d, out)
    }
}

fn symmetric(rng: &mut Rng, max: f64) -> f64 {
    if max > 0.0 {
        rng.uniform(-max, max).expect("max > 0")
    } else {
        0.0
    }
}

fn flip(src: &[f32], h: usize, w: usize, vertical: bool) -> Vec<f32> {
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let (sr, sc) = if vertical { (h - 1 - r, c) } else { (r, w - 1 - c) };
            out.push(src[sr * w + sc]);
        }
    }
    out
}

/// Rotates by `degrees` about the centre, scales by `scale` and shifts by
/// `(dy, dx)` pixels, resampling each output pixel from its inverse image.
fn affine(src: &[f32], h: usize, w: usize, degrees: f64, scale: f64, dy: f64, dx: f64) -> Vec<f32> {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let y = (r as f64 - cy - dy) / scale;
            let x = (c as f64 - cx - dx) / scale;
            let sy = cos * y - sin * x + cy;
            let sx = sin * y + cos * x + cx;
            out.push(sample_bilinear(src, h, w, sy, sx, Border::Reflect));
        }
    }
    out
}

fn gaussian_blur(src: &[f32], h: usize, w: usize, sigma: f64) -> Vec<f32> {
    let taps: Vec<f64> = (-1..=1).map(|i: i32| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = taps.iter().sum();
    let taps: Vec<f32> = taps.iter().map(|t| (t / norm) as f32).collect();
    let pass = |input: &[f32], vertical: bool| -> Vec<f32> {
        let mut out = vec![0.0f32; h * w];
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for (k, &t) in taps.iter().enumerate() {
                    let off = k as f64 - 1.0;
                    let (y, x) = if vertical { (r as f64 + off, c as f64) } else { (r as f64, c as f64 + off) };
                    acc += t * sample_bilinear(input, h, w, y, x, Border::Reflect);
                }
                out[r * w + c] = acc;
            }
        }
        out
    };
    pass(&pass(src, false), true)
}

/// Rotates an image by exactly `degrees`, the deterministic core of [`AugmentKind::Rotation`].
pub fn rotate(image: &Tensor<f32>, degrees: f64) -> Result<Tensor<f32>> {
    let d = image.dims();
    if (d.n, d.c) != (1, 1) {
        return Err(Error::ShapeMismatch(format!("rotate takes a (1, 1, h, w) image, got {d}")));
    }
    let out = affine(image.data(), d.h, d.w, degrees, 1.0, 0.0, 0.0);
    Tensor::from_values(d, out.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// `(δ·x_i + (1 − δ)·x_j, δ·y_i + (1 − δ)·y_j)`.
pub fn mixup<T: Float>(
    x_i: &Tensor<T>,
    x_j: &Tensor<T>,
    y_i: &[f64],
    y_j: &[f64],
    delta: f64,
) -> Result<(Tensor<T>, Vec<f64>)> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!("mixup delta must be in [0, 1], got {delta}")));
    }
    if x_i.dims() != x_j.dims() {
        return Err(Error::ShapeMismatch(format!("mixup images {} vs {}", x_i.dims(), x_j.dims())));
    }
    if y_i.len() != y_j.len() {
        return Err(Error::ShapeMismatch(format!("mixup labels of length {} vs {}", y_i.len(), y_j.len())));
    }
    let (a, b) = (T::from_f64(delta), T::from_f64(1.0 - delta));
    let x: Vec<T> = x_i.data().iter().zip(x_j.data()).map(|(&p, &q)| a * p + b * q).collect();
    let y = y_i.iter().zip(y_j).map(|(&p, &q)| delta * p + (1.0 - delta) * q).collect();
    Ok((Tensor::from_values(x_i.dims(), x)?, y))
}

/// Ordered augmentations with per-sample random streams.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    ops: Vec<AugmentOp>,
    seed: u64,
}

impl Pipeline {
    pub fn new(ops: Vec<AugmentOp>, seed: u64) -> Self {
        Pipeline { ops, seed }
    }

    pub fn ops(&self) -> &[AugmentOp] {
        &self.ops
    }

    pub fn is_identity(&self) -> bool {
        self.ops.iter().all(|op| op.probability == 0.0)
    }

    /// Augments sample `index` of `epoch`; the result depends only on
    /// `(seed, epoch, index)` and the image.
    pub fn apply(&self, image: &Tensor<f32>, epoch: u64, index: u64) -> Result<Tensor<f32>> {
        let mut rng = Rng::stream(self.seed, &[epoch, index]);
        let mut out = image.clone();
        for op in &self.ops {
            out = op.apply(&out, &mut rng)?;
        }
        Ok(out)
    }
}

/// Builds a pipeline from `(name, probability)` pairs in order, using each
/// op's default parameters.
pub fn build_pipeline<S: AsRef<str>>(entries: &[(S, f64)], seed: u64) -> Result<Pipeline> {
    let ops = entries
        .iter()
        .map(|(name, p)| AugmentOp::new(name.as_ref().parse()?, *p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Pipeline::new(ops, seed))
}
