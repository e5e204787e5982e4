//! Loss, optimizer, weight averaging and the training loop.

pub mod loss;
mod optim;
mod swa;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

pub use optim::{cosine_lr, sgd_step, Sgd};
pub use swa::{swa_start_epoch, SwaState};

use crate::augment::{self, AugmentOp, Pipeline};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::{Float, Rng, Tensor};
use loss::{one_hot, smooth_labels, softmax_cross_entropy};

/// Default label-smoothing factor when smoothing is switched on.
pub const DEFAULT_LABEL_SMOOTHING: f64 = 0.1;

// Stream keys separating the independent random sequences of a run.
const SHUFFLE_STREAM: u64 = 1;
const MIXUP_STREAM: u64 = 2;
const AUGMENT_STREAM: u64 = 3;

/// How the mixup weight δ is chosen for each batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixupDelta {
    Beta { a: f64, b: f64 },
    Fixed(f64),
}

impl Default for MixupDelta {
    fn default() -> Self {
        MixupDelta::Beta { a: 0.2, b: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate reached by the per-step cosine schedule at the last step.
    pub min_learning_rate: f64,
    pub momentum: f64,
    /// Rescales the gradient so its global L2 norm is at most this value.
    pub grad_clip: Option<f64>,
    /// Label-smoothing α; `None` trains on one-hot targets.
    pub label_smoothing: Option<f64>,
    pub mixup: Option<MixupDelta>,
    pub swa: bool,
    /// Augmentations applied to training images, in order.
    pub augment: Vec<AugmentOp>,
    pub seed: u64,
    /// Stop after the first epoch whose running train accuracy reaches this.
    pub target_train_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15,
            batch_size: 64,
            learning_rate: 0.01,
            min_learning_rate: 1e-4,
            momentum: 0.9,
            grad_clip: Some(1.0),
            label_smoothing: None,
            mixup: None,
            swa: false,
            augment: Vec::new(),
            seed: 0,
            target_train_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.min_learning_rate >= 0.0) {
            return bad("learning rates must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return bad("grad_clip must be > 0".into());
        }
        if let Some(a) = self.label_smoothing {
            if !(0.0..1.0).contains(&a) {
                return bad(format!("label smoothing must be in [0, 1), got {a}"));
            }
        }
        match self.mixup {
            Some(MixupDelta::Fixed(d)) if !(0.0..=1.0).contains(&d) => bad(format!("mixup delta {d} outside [0, 1]")),
            Some(MixupDelta::Beta { a, b }) if !(a > 0.0 && b > 0.0) => bad(format!("mixup Beta({a}, {b}) invalid")),
            _ => Ok(()),
        }
    }
}

/// Metrics of one finished epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean batch loss.
    pub train_loss: f64,
    /// Running accuracy over the epoch's (augmented) training batches.
    pub train_acc: f64,
    pub eval_acc: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_acc,eval_acc,seconds";

    /// One row per epoch; `eval_acc` is empty when no evaluation set was given.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for e in &self.epochs {
            let eval = e.eval_acc.map(|a| format!("{a:.6}")).unwrap_or_default();
            let _ = writeln!(s, "{},{:.6},{:.6},{eval},{:.3}", e.epoch, e.train_loss, e.train_acc, e.seconds);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

/// Result of [`train`]. The trained weights stay in the network passed in.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T = f32> {
    pub report: TrainReport,
    /// Averaged weights, present when SWA was enabled.
    pub swa: Option<Network<T>>,
}

fn check_compatible<T: Float>(net: &Network<T>, data: &Dataset) -> Result<()> {
    if net.num_outputs() != data.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "network has {} outputs, dataset has {} classes",
            net.num_outputs(),
            data.num_classes()
        )));
    }
    let input = net.input_dims();
    if (input.c, input.h, input.w) != (1, data.image_size().0, data.image_size().1) {
        return Err(Error::ShapeMismatch(format!(
            "network expects {}x{}x{} input, dataset images are 1x{}x{}",
            input.c,
            input.h,
            input.w,
            data.image_size().0,
            data.image_size().1
        )));
    }
    Ok(())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Float>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Trains `net` in place with mini-batch SGD and the configured techniques.
///
/// Each epoch visits the training set in a seeded random order. A batch is
/// augmented per sample, given one-hot (optionally smoothed) targets, and
/// with mixup each sample is blended with a partner drawn by permuting the
/// batch. The learning rate follows a cosine decay per step. With SWA,
/// snapshots are averaged from [`swa_start_epoch`] on; if training stops
/// before then, the final weights form the single snapshot.
pub fn train<T: Float>(
    net: &mut Network<T>,
    train_set: &Dataset,
    eval_set: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    check_compatible(net, train_set)?;
    if let Some(e) = eval_set {
        check_compatible(net, e)?;
    }
    let k = train_set.num_classes();
    let n = train_set.len();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = batches_per_epoch * config.epochs;
    let pipeline = Pipeline::new(config.augment.clone(), config.seed ^ AUGMENT_STREAM.rotate_left(32));
    let mut sgd = Sgd::for_network(net, config.learning_rate, config.momentum);
    let mut swa = config.swa.then(|| SwaState::new(swa_start_epoch(config.epochs)));
    let mut report = TrainReport::default();
    let mut step = 0;

    let targets: Vec<Vec<f64>> = (0..k)
        .map(|label| {
            let hot = one_hot(label, k)?;
            match config.label_smoothing {
                Some(alpha) => smooth_labels(&hot, alpha, k),
                None => Ok(hot),
            }
        })
        .collect::<Result<_>>()?;

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        Rng::stream(config.seed, &[SHUFFLE_STREAM, epoch as u64]).shuffle(&mut order);
        let (mut loss_sum, mut correct) = (0.0, 0usize);

        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut images = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let img = train_set.image(i);
                images.push(if pipeline.is_identity() { img.clone() } else { pipeline.apply(img, epoch as u64, i as u64)? });
            }
            let mut batch_targets: Vec<Vec<f64>> = chunk.iter().map(|&i| targets[train_set.label(i)].clone()).collect();
            if let Some(mix) = config.mixup {
                let mut rng = Rng::stream(config.seed, &[MIXUP_STREAM, epoch as u64, b as u64]);
                let delta = match mix {
                    MixupDelta::Beta { a, b } => rng.beta(a, b)?,
                    MixupDelta::Fixed(d) => d,
                };
                let mut partner: Vec<usize> = (0..chunk.len()).collect();
                rng.shuffle(&mut partner);
                let (mut mixed_x, mut mixed_y) = (Vec::with_capacity(chunk.len()), Vec::with_capacity(chunk.len()));
                for (s, &p) in partner.iter().enumerate() {
                    let (x, y) = augment::mixup(&images[s], &images[p], &batch_targets[s], &batch_targets[p], delta)?;
                    mixed_x.push(x);
                    mixed_y.push(y);
                }
                images = mixed_x;
                batch_targets = mixed_y;
            }

            let refs: Vec<&Tensor<f32>> = images.iter().collect();
            let x = Tensor::stack(&refs)?.cast::<T>();
            let flat: Vec<T> = batch_targets.iter().flatten().map(|&v| T::from_f64(v)).collect();
            let logits = net.forward_train(&x)?;
            let batch = softmax_cross_entropy(&logits, &flat)?;
            let loss = batch.loss.to_f64();
            if !loss.is_finite() {
                return Err(Error::InvalidArgument(format!("loss became {loss} at epoch {epoch}, batch {b}")));
            }
            loss_sum += loss * chunk.len() as f64;
            for (row, t) in batch.probs.data().chunks_exact(k).zip(&batch_targets) {
                if argmax(row) == argmax(t) {
                    correct += 1;
                }
            }
            let mut grads = net.backward(&batch.grad)?;
            if let Some(max_norm) = config.grad_clip {
                clip_global_norm(&mut grads, max_norm);
            }
            sgd.learning_rate = cosine_lr(config.learning_rate, config.min_learning_rate, step, total_steps);
            sgd.step(net, &grads)?;
            step += 1;
        }

        if let Some(s) = swa.as_mut() {
            s.update(net, epoch)?;
        }
        let eval_acc = eval_set.map(|e| evaluate(net, e).map(|r| r.accuracy)).transpose()?;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / n as f64,
            train_acc: correct as f64 / n as f64,
            eval_acc,
            seconds: started.elapsed().as_secs_f64(),
        };
        let done = config.target_train_accuracy.is_some_and(|t| stats.train_acc >= t);
        report.epochs.push(stats);
        if done {
            break;
        }
    }

    let swa = match swa {
        Some(mut s) => {
            if s.n_models() == 0 {
                s.snapshot(net)?;
            }
            s.into_averaged()
        }
        None => None,
    };
    Ok(TrainOutcome { report, swa })
}

/// Scales `grads` down so their joint L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm<T: Float>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v.to_f64() * v.to_f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = T::from_f64(max_norm / norm);
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}

/// Clean-data metrics of a network on a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Accuracy per class; `None` for classes absent from the dataset.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Mean cross-entropy against one-hot labels.
    pub mean_loss: f64,
    pub predictions: Vec<usize>,
}

const EVAL_BATCH: usize = 128;

pub fn evaluate<T: Float>(net: &Network<T>, data: &Dataset) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_compatible(net, data)?;
    let k = data.num_classes();
    let mut predictions = Vec::with_capacity(data.len());
    let mut loss_sum = 0.0;
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let x = data.batch(chunk)?.cast::<T>();
        let logits = net.forward_logits(&x)?;
        let mut targets = Vec::with_capacity(chunk.len() * k);
        for &i in chunk {
            targets.extend(one_hot(data.label(i), k)?.into_iter().map(T::from_f64));
        }
        let batch = softmax_cross_entropy(&logits, &targets)?;
        loss_sum += batch.per_sample.iter().map(|v| v.to_f64()).sum::<f64>();
        predictions.extend(logits.data().chunks_exact(k).map(argmax));
    }
    let mut hits = vec![0usize; k];
    let counts = data.class_counts();
    for (&p, &l) in predictions.iter().zip(data.labels()) {
        if p == l {
            hits[l] += 1;
        }
    }
    let correct: usize = hits.iter().sum();
    Ok(EvalReport {
        accuracy: correct as f64 / data.len() as f64,
        per_class_accuracy: hits
            .iter()
            .zip(&counts)
            .map(|(&h, &c)| (c > 0).then(|| h as f64 / c as f64))
            .collect(),
        mean_loss: loss_sum / data.len() as f64,
        predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.5f32; 4]), 0);
        assert_eq!(argmax(&[-1.0, -2.0]), 0);
    }

    #[test]
    fn csv_layout() {
        let report = TrainReport {
            epochs: vec![
                EpochStats { epoch: 1, train_loss: 2.0, train_acc: 0.5, eval_acc: Some(0.25), seconds: 1.5 },
                EpochStats { epoch: 2, train_loss: 1.0, train_acc: 0.75, eval_acc: None, seconds: 1.0 },
            ],
        };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TrainReport::CSV_HEADER);
        assert_eq!(lines[1], "1,2.000000,0.500000,0.250000,1.500");
        assert_eq!(lines[2], "2,1.000000,0.750000,,1.000");
    }
}
