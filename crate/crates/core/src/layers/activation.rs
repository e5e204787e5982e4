use crate::tensor::{Float, Tensor};

pub(super) fn relu<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::ZERO { v } else { T::ZERO })
}

pub(super) fn relu_backward<T: Float>(x: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let mut dx = grad.clone();
    for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v <= T::ZERO {
            *g = T::ZERO;
        }
    }
    dx
}

/// Row-wise softmax over each sample's flattened features.
pub(super) fn softmax<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let k = x.dims().sample_len();
    let mut y = x.clone();
    for row in y.data_mut().chunks_exact_mut(k) {
        softmax_in_place(row);
    }
    y
}

pub(crate) fn softmax_in_place<T: Float>(row: &mut [T]) {
    let max = row.iter().copied().fold(row[0], T::max);
    let mut sum = T::ZERO;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `dx = y ⊙ (g − ⟨g, y⟩)` per row.
pub(super) fn softmax_backward<T: Float>(y: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let k = y.dims().sample_len();
    let mut dx = grad.clone();
    for (drow, yrow) in dx.data_mut().chunks_exact_mut(k).zip(y.data().chunks_exact(k)) {
        let dot: T = drow.iter().zip(yrow).map(|(&g, &p)| g * p).sum();
        for (d, &p) in drow.iter_mut().zip(yrow) {
            *d = p * (*d - dot);
        }
    }
    dx
}
