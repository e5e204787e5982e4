//! Labeled grayscale datasets: the CDS1 container, PGM directory import,
//! the synthetic generator and stratified splitting.

mod container;
mod pgm;
mod synth;

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

pub use container::{load_container, read_container, save_container, write_container, DATASET_MAGIC};
pub use pgm::{import_directory, parse_pgm, Pgm};
pub use synth::synth;

/// Grayscale images in `[0, 1]`, each `(1, 1, h, w)`, with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<Tensor<f32>>,
    labels: Vec<usize>,
    num_classes: usize,
    class_names: Vec<String>,
    height: usize,
    width: usize,
}

impl Dataset {
    /// Checks that all images share one `(1, 1, h, w)` shape and every
    /// label is below `num_classes`. Empty `class_names` become `"0".."K-1"`.
    pub fn new(
        images: Vec<Tensor<f32>>,
        labels: Vec<usize>,
        num_classes: usize,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if images.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!("{} images but {} labels", images.len(), labels.len())));
        }
        let d = images[0].dims();
        if (d.n, d.c) != (1, 1) {
            return Err(Error::ShapeMismatch(format!("images must be (1, 1, h, w), got {d}")));
        }
        if let Some(bad) = images.iter().find(|im| im.dims() != d) {
            return Err(Error::ShapeMismatch(format!("image dims {} differ from {d}", bad.dims())));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        let class_names = if class_names.is_empty() {
            (0..num_classes).map(|k| k.to_string()).collect()
        } else if class_names.len() == num_classes {
            class_names
        } else {
            return Err(Error::ShapeMismatch(format!(
                "{} class names for {num_classes} classes",
                class_names.len()
            )));
        };
        Ok(Dataset { images, labels, num_classes, class_names, height: d.h, width: d.w })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Tensor<f32>] {
        &self.images
    }

    pub fn image(&self, index: usize) -> &Tensor<f32> {
        &self.images[index]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Image `(height, width)`.
    pub fn image_size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// The samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidArgument(format!("index {bad} out of range for {} samples", self.len())));
        }
        Dataset::new(
            indices.iter().map(|&i| self.images[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.num_classes,
            self.class_names.clone(),
        )
    }

    /// Stacks the samples at `indices` into one `(len, 1, h, w)` tensor.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor<f32>> {
        let items: Vec<&Tensor<f32>> = indices.iter().map(|&i| &self.images[i]).collect();
        Tensor::stack(&items)
    }

    /// Plain-text summary: size, image dims and per-class counts.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} samples, {}x{} pixels, {} classes\n",
            self.len(),
            self.height,
            self.width,
            self.num_classes
        );
        for (name, count) in self.class_names.iter().zip(self.class_counts()) {
            let _ = writeln!(s, "  {name}: {count}");
        }
        s
    }

    /// Stratified split: within every class, a seeded shuffle sends
    /// `round(fraction · count)` samples (at least one, and leaving at
    /// least one) to the first set. Both sets keep the original order.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidArgument(format!("split fraction must be in (0, 1), got {fraction}")));
        }
        let mut first = Vec::new();
        let mut second = Vec::new();
        for class in 0..self.num_classes {
            let mut members: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == class).collect();
            if members.is_empty() {
                continue;
            }
            if members.len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "class `{}` has {} sample(s); a split needs at least 2",
                    self.class_names[class],
                    members.len()
                )));
            }
            Rng::stream(seed, &[class as u64]).shuffle(&mut members);
            let take = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
            first.extend_from_slice(&members[..take]);
            second.extend_from_slice(&members[take..]);
        }
        first.sort_unstable();
        second.sort_unstable();
        Ok((self.subset(&first)?, self.subset(&second)?))
    }
}
