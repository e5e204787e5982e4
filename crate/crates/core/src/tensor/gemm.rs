//! Row-major matrix products backing im2col convolution and the dense layers.

use super::Float;
use crate::error::{Error, Result};

/// Column block width for `gemm_nn`; keeps a panel of `b` resident in cache
/// across the rows of `a`.
const COL_BLOCK: usize = 256;

/// Borrowed row-major matrix.
#[derive(Debug, Clone, Copy)]
pub struct MatView<'a, T> {
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [T],
}

impl<'a, T: Float> MatView<'a, T> {
    pub fn new(rows: usize, cols: usize, data: &'a [T]) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::InvalidDims(format!(
                "{rows}x{cols} matrix view over {} values",
                data.len()
            )));
        }
        Ok(MatView { rows, cols, data })
    }

    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }
}

/// Owned row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Float> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        MatView::new(rows, cols, &data)?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn identity(size: usize) -> Self {
        let mut data = vec![T::ZERO; size * size];
        for i in 0..size {
            data[i * size + i] = T::ONE;
        }
        Matrix { rows: size, cols: size, data }
    }

    pub fn view(&self) -> MatView<'_, T> {
        MatView { rows: self.rows, cols: self.cols, data: &self.data }
    }

    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }
}

/// Standard matrix product `a · b`.
pub fn matmul<T: Float>(a: MatView<'_, T>, b: MatView<'_, T>) -> Result<Matrix<T>> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch(format!(
            "matmul: {}x{} · {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = vec![T::ZERO; a.rows * b.cols];
    gemm_nn(a.rows, b.cols, a.cols, a.data, b.data, &mut out, false);
    Ok(Matrix { rows: a.rows, cols: b.cols, data: out })
}

/// `c[m×n] (+)= a[m×k] · b[k×n]`.
pub(crate) fn gemm_nn<T: Float>(
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if !accumulate {
        c.iter_mut().for_each(|v| *v = T::ZERO);
    }
    let mut j0 = 0;
    while j0 < n {
        let j1 = (j0 + COL_BLOCK).min(n);
        for i in 0..m {
            let a_row = &a[i * k..(i + 1) * k];
            let c_row = &mut c[i * n + j0..i * n + j1];
            for (p, &av) in a_row.iter().enumerate() {
                if av == T::ZERO {
                    continue;
                }
                let b_row = &b[p * n + j0..p * n + j1];
                for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                    *cv += av * bv;
                }
            }
        }
        j0 = j1;
    }
}

/// `c[m×n] (+)= a[m×k] · b[n×k]ᵀ`.
pub(crate) fn gemm_nt<T: Float>(
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let d = dot(a_row, &b[j * k..(j + 1) * k]);
            let cv = &mut c[i * n + j];
            *cv = if accumulate { *cv + d } else { d };
        }
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes
/// while staying deterministic.
#[inline]
fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::ZERO; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::ZERO;
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Transpose of a row-major `rows×cols` matrix.
pub(crate) fn transpose<T: Float>(rows: usize, cols: usize, a: &[T]) -> Vec<T> {
    let mut out = vec![T::ZERO; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    fn naive(m: usize, n: usize, k: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn random(rng: &mut Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.uniform(-1.0, 1.0).unwrap()).collect()
    }

    #[test]
    fn identity_times_matrix() {
        let a = Matrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let out = matmul(Matrix::<f64>::identity(2).view(), a.view()).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn small_product() {
        let a = Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Matrix::new(2, 1, vec![5.0, 6.0]).unwrap();
        let out = matmul::<f64>(a.view(), b.view()).unwrap();
        assert_eq!(out.data, vec![17.0, 39.0]);
    }

    #[test]
    fn inner_dim_mismatch() {
        let a = Matrix::<f64>::identity(2);
        let b = Matrix::<f64>::identity(3);
        assert!(matches!(matmul(a.view(), b.view()), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn matches_triple_loop_on_random_shapes() {
        let mut rng = Rng::new(11);
        for case in 0..200 {
            let (m, n, k) = if case == 0 {
                (7, 3, 5)
            } else {
                (rng.below(9) + 1, rng.below(300) + 1, rng.below(17) + 1)
            };
            let a = random(&mut rng, m * k);
            let b = random(&mut rng, k * n);
            let expect = naive(m, n, k, &a, &b);
            let got = matmul(MatView::new(m, k, &a).unwrap(), MatView::new(k, n, &b).unwrap())
                .unwrap();
            for (x, y) in got.data.iter().zip(&expect) {
                assert!((x - y).abs() < 1e-12, "case {case}: {x} vs {y}");
            }

            let bt = transpose(k, n, &b);
            let mut c = vec![0.0; m * n];
            gemm_nt(m, n, k, &a, &bt, &mut c, false);
            for (x, y) in c.iter().zip(&expect) {
                assert!((x - y).abs() < 1e-12, "nt case {case}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn accumulate_adds_into_output() {
        let a = [1.0, 2.0];
        let b = [3.0, 4.0];
        let mut c = [10.0];
        gemm_nn(1, 1, 2, &a, &b, &mut c, true);
        assert_eq!(c, [21.0]);
        gemm_nt(1, 1, 2, &a, &b, &mut c, true);
        assert_eq!(c, [32.0]);
    }
}
