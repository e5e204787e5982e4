use crate::tensor::{gemm_nn, gemm_nt, Dims, Float, Tensor};

/// `y = x · Wᵀ + b` on flattened samples; `weight` is `(1, 1, K, F)`.
pub(super) fn forward<T: Float>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>, out_dims: Dims) -> Tensor<T> {
    let n = x.dims().n;
    let f = x.dims().sample_len();
    let k = out_dims.c;
    let mut out = vec![T::ZERO; n * k];
    gemm_nt(n, k, f, x.data(), weight.data(), &mut out, false);
    for row in out.chunks_exact_mut(k) {
        for (v, &b) in row.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
    Tensor::from_parts(out_dims, out)
}

/// Returns `(dx, dweight, dbias)`.
pub(super) fn backward<T: Float>(x: &Tensor<T>, weight: &Tensor<T>, grad: &Tensor<T>) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let n = x.dims().n;
    let f = x.dims().sample_len();
    let k = grad.dims().sample_len();

    let gt = crate::tensor::transpose(n, k, grad.data());
    let mut dw = Tensor::alloc(weight.dims());
    gemm_nn(k, f, n, &gt, x.data(), dw.data_mut(), false);

    let mut db = Tensor::alloc(Dims::of(1, 1, 1, k));
    for row in grad.data().chunks_exact(k) {
        for (acc, &g) in db.data_mut().iter_mut().zip(row) {
            *acc += g;
        }
    }

    let mut dx = Tensor::alloc(x.dims());
    gemm_nn(n, f, k, grad.data(), weight.data(), dx.data_mut(), false);
    (dx, dw, db)
}
