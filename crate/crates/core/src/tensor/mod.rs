//! Dense rank-4 NCHW tensors, matrix products, and the seedable generator.
//!
//! Every activation, weight, and gradient in the engine is a [`Tensor`]. The
//! element type is generic over [`Float`]: `f64` is used for gradient checks,
//! `f32` for training and benchmarking.

mod float;
mod gemm;
mod rng;

use std::fmt;

pub use float::Float;
pub use gemm::{matmul, MatView, Matrix};
pub(crate) use gemm::{gemm_nn, gemm_nt, transpose};
pub use rng::Rng;

use crate::error::{Error, Result};

/// Batch, channel, row, and column extents of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        let dims = Dims { n, c, h, w };
        dims.validate()?;
        Ok(dims)
    }

    pub(crate) const fn of(n: usize, c: usize, h: usize, w: usize) -> Self {
        Dims { n, c, h, w }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.c == 0 || self.h == 0 || self.w == 0 {
            return Err(Error::InvalidDims(format!("all dims must be >= 1, got {self}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one sample (`c * h * w`).
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn with_batch(&self, n: usize) -> Self {
        Dims { n, ..*self }
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

impl From<(usize, usize, usize, usize)> for Dims {
    fn from((n, c, h, w): (usize, usize, usize, usize)) -> Self {
        Dims { n, c, h, w }
    }
}

/// Contiguous row-major NCHW tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Float> Tensor<T> {
    pub fn zeros(dims: impl Into<Dims>) -> Result<Self> {
        Self::full(dims, T::ZERO)
    }

    pub fn full(dims: impl Into<Dims>, value: T) -> Result<Self> {
        let dims = dims.into();
        dims.validate()?;
        Ok(Tensor { dims, data: vec![value; dims.len()] })
    }

    pub fn from_values(dims: impl Into<Dims>, values: Vec<T>) -> Result<Self> {
        let dims = dims.into();
        dims.validate()?;
        if values.len() != dims.len() {
            return Err(Error::InvalidDims(format!(
                "{} values supplied for dims {dims} ({} expected)",
                values.len(),
                dims.len()
            )));
        }
        Ok(Tensor { dims, data: values })
    }

    /// Zero tensor for dims already known to be valid.
    pub(crate) fn alloc(dims: Dims) -> Self {
        debug_assert!(dims.validate().is_ok(), "alloc with invalid dims {dims}");
        Tensor { dims, data: vec![T::ZERO; dims.len()] }
    }

    pub(crate) fn from_parts(dims: Dims, data: Vec<T>) -> Self {
        debug_assert_eq!(dims.len(), data.len());
        Tensor { dims, data }
    }

    pub fn zeros_like(&self) -> Self {
        Tensor::alloc(self.dims)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.offset(n, c, h, w)]
    }

    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, value: T) {
        let i = self.offset(n, c, h, w);
        self.data[i] = value;
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let d = self.dims;
        ((n * d.c + c) * d.h + h) * d.w + w
    }

    /// The `index`-th sample as a batch-1 tensor.
    pub fn sample(&self, index: usize) -> Tensor<T> {
        let len = self.dims.sample_len();
        Tensor {
            dims: self.dims.with_batch(1),
            data: self.data[index * len..(index + 1) * len].to_vec(),
        }
    }

    pub fn sample_slice(&self, index: usize) -> &[T] {
        let len = self.dims.sample_len();
        &self.data[index * len..(index + 1) * len]
    }

    /// Concatenates equally shaped tensors along the batch axis.
    pub fn stack(items: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack zero tensors".into()))?;
        let inner = first.dims;
        let mut data = Vec::with_capacity(inner.len() * items.len());
        let mut n = 0;
        for t in items {
            if t.dims.c != inner.c || t.dims.h != inner.h || t.dims.w != inner.w {
                return Err(Error::ShapeMismatch(format!(
                    "stack: {} vs {}",
                    t.dims, inner
                )));
            }
            data.extend_from_slice(&t.data);
            n += t.dims.n;
        }
        Ok(Tensor { dims: inner.with_batch(n), data })
    }

    pub fn reshape(self, dims: impl Into<Dims>) -> Result<Self> {
        let dims = dims.into();
        dims.validate()?;
        if dims.len() != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {} into {dims}",
                self.dims
            )));
        }
        Ok(Tensor { dims, data: self.data })
    }

    pub fn cast<U: Float>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    fn check_same(&self, other: &Tensor<T>, op: &str) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch(format!(
                "{op}: {} vs {}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Tensor<T>, op: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        self.check_same(other, op)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { dims: self.dims, data })
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, factor: T) -> Tensor<T> {
        self.map(|v| v * factor)
    }

    pub fn add_scalar(&self, value: T) -> Tensor<T> {
        self.map(|v| v + value)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor { dims: self.dims, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Tensor<T>) -> Result<()> {
        self.check_same(other, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::ZERO, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Debug-build guard that no op produced NaN or infinity.
    #[inline]
    pub(crate) fn debug_check_finite(&self, what: &str) {
        debug_assert!(self.all_finite(), "non-finite values after {what}");
        let _ = what;
    }
}
