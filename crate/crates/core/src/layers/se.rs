//! Squeeze-and-excite: GAP → dense → ReLU → dense → sigmoid gate per channel.

use crate::tensor::{Float, Tensor};

pub(super) struct Forward<T> {
    pub output: Tensor<T>,
    pub squeezed: Vec<T>,
    pub hidden_pre: Vec<T>,
    pub gate: Vec<T>,
}

pub(super) struct Saved<'a, T> {
    pub squeezed: &'a [T],
    pub hidden_pre: &'a [T],
    pub gate: &'a [T],
}

#[inline]
fn sigmoid<T: Float>(z: T) -> T {
    if z >= T::ZERO {
        T::ONE / (T::ONE + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::ONE + e)
    }
}

/// `out[r] = bias[r] + Σ_k w[r, k] · v[k]`
fn affine<T: Float>(w: &[T], bias: &[T], v: &[T]) -> Vec<T> {
    let k = v.len();
    w.chunks_exact(k)
        .zip(bias)
        .map(|(row, &b)| b + row.iter().zip(v).map(|(&a, &x)| a * x).sum::<T>())
        .collect()
}

pub(super) fn forward<T: Float>(x: &Tensor<T>, params: &[Tensor<T>], hidden: usize) -> Forward<T> {
    let d = x.dims();
    let plane = d.plane();
    let count = T::from_usize(plane);
    let (w1, b1, w2, b2) = (params[0].data(), params[1].data(), params[2].data(), params[3].data());

    let squeezed: Vec<T> =
        x.data().chunks_exact(plane).map(|p| p.iter().copied().sum::<T>() / count).collect();
    let mut hidden_pre = Vec::with_capacity(d.n * hidden);
    let mut gate = Vec::with_capacity(d.n * d.c);
    for s in squeezed.chunks_exact(d.c) {
        let z1 = affine(w1, b1, s);
        let h: Vec<T> = z1.iter().map(|&z| z.max(T::ZERO)).collect();
        gate.extend(affine(w2, b2, &h).into_iter().map(sigmoid));
        hidden_pre.extend(z1);
    }

    let mut output = x.clone();
    for (chunk, &g) in output.data_mut().chunks_exact_mut(plane).zip(&gate) {
        chunk.iter_mut().for_each(|v| *v *= g);
    }
    Forward { output, squeezed, hidden_pre, gate }
}

/// Returns `(dx, [dW1, db1, dW2, db2])`.
pub(super) fn backward<T: Float>(
    x: &Tensor<T>,
    params: &[Tensor<T>],
    hidden: usize,
    saved: &Saved<'_, T>,
    grad: &Tensor<T>,
) -> (Tensor<T>, Vec<Tensor<T>>) {
    let d = x.dims();
    let c = d.c;
    let plane = d.plane();
    let count = T::from_usize(plane);
    let (w1, w2) = (params[0].data(), params[2].data());

    let mut dw1 = Tensor::alloc(params[0].dims());
    let mut db1 = Tensor::alloc(params[1].dims());
    let mut dw2 = Tensor::alloc(params[2].dims());
    let mut db2 = Tensor::alloc(params[3].dims());

    // Direct path: out = g · x.
    let mut dx = grad.clone();
    for (chunk, &g) in dx.data_mut().chunks_exact_mut(plane).zip(saved.gate) {
        chunk.iter_mut().for_each(|v| *v *= g);
    }

    for n in 0..d.n {
        let s = &saved.squeezed[n * c..(n + 1) * c];
        let z1 = &saved.hidden_pre[n * hidden..(n + 1) * hidden];
        let gate = &saved.gate[n * c..(n + 1) * c];

        // dL/dg_k = Σ_hw grad · x, then through the sigmoid.
        let dz2: Vec<T> = (0..c)
            .map(|k| {
                let off = (n * c + k) * plane;
                let dg: T = grad.data()[off..off + plane]
                    .iter()
                    .zip(&x.data()[off..off + plane])
                    .map(|(&a, &b)| a * b)
                    .sum();
                dg * gate[k] * (T::ONE - gate[k])
            })
            .collect();

        let h: Vec<T> = z1.iter().map(|&z| z.max(T::ZERO)).collect();
        let mut dh = vec![T::ZERO; hidden];
        for k in 0..c {
            db2.data_mut()[k] += dz2[k];
            let row = &w2[k * hidden..(k + 1) * hidden];
            let drow = &mut dw2.data_mut()[k * hidden..(k + 1) * hidden];
            for j in 0..hidden {
                drow[j] += dz2[k] * h[j];
                dh[j] += row[j] * dz2[k];
            }
        }

        let mut ds = vec![T::ZERO; c];
        for j in 0..hidden {
            let dz1 = if z1[j] > T::ZERO { dh[j] } else { T::ZERO };
            db1.data_mut()[j] += dz1;
            let row = &w1[j * c..(j + 1) * c];
            let drow = &mut dw1.data_mut()[j * c..(j + 1) * c];
            for k in 0..c {
                drow[k] += dz1 * s[k];
                ds[k] += row[k] * dz1;
            }
        }

        // Squeeze path: s = mean over the plane.
        for k in 0..c {
            let share = ds[k] / count;
            let off = (n * c + k) * plane;
            dx.data_mut()[off..off + plane].iter_mut().for_each(|v| *v += share);
        }
    }

    (dx, vec![dw1, db1, dw2, db2])
}
