//! 3×3 convolution via im2col + GEMM, per-channel (depth-wise) 3×3, and
//! point-wise 1×1 convolution. All are cross-correlations with zero padding 1.

use crate::tensor::{gemm_nn, gemm_nt, transpose, Dims, Float, Tensor};

/// NCHW → row-major `(C, N·H·W)` matrix.
pub(super) fn nchw_to_cn<T: Float>(x: &Tensor<T>) -> Vec<T> {
    let d = x.dims();
    let plane = d.plane();
    let np = d.n * plane;
    let mut out = vec![T::ZERO; d.c * np];
    for n in 0..d.n {
        for c in 0..d.c {
            let src = &x.data()[(n * d.c + c) * plane..][..plane];
            out[c * np + n * plane..][..plane].copy_from_slice(src);
        }
    }
    out
}

/// Row-major `(C, N·H·W)` matrix → NCHW tensor of `dims`.
pub(super) fn cn_to_nchw<T: Float>(buf: &[T], dims: Dims) -> Tensor<T> {
    let plane = dims.plane();
    let np = dims.n * plane;
    let mut out = Tensor::alloc(dims);
    let data = out.data_mut();
    for n in 0..dims.n {
        for c in 0..dims.c {
            data[(n * dims.c + c) * plane..][..plane].copy_from_slice(&buf[c * np + n * plane..][..plane]);
        }
    }
    out
}

#[inline]
fn out_extent(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

/// Unfolds 3×3 patches into a `(C·9, N·Ho·Wo)` matrix. Row `c·9 + ky·3 + kx`,
/// column `n·Ho·Wo + oy·Wo + ox`.
fn im2col<T: Float>(x: &Tensor<T>, stride: usize) -> (Vec<T>, usize, usize) {
    let d = x.dims();
    let (ho, wo) = (out_extent(d.h, stride), out_extent(d.w, stride));
    let cols = d.n * ho * wo;
    let mut out = vec![T::ZERO; d.c * 9 * cols];
    let src = x.data();
    for c in 0..d.c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut out[((c * 9) + ky * 3 + kx) * cols..][..cols];
                for n in 0..d.n {
                    let plane = &src[(n * d.c + c) * d.h * d.w..][..d.h * d.w];
                    for oy in 0..ho {
                        let iy = (oy * stride + ky) as isize - 1;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        let in_row = &plane[iy as usize * d.w..][..d.w];
                        let dst = &mut row[(n * ho + oy) * wo..][..wo];
                        for (ox, v) in dst.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - 1;
                            if ix >= 0 && ix < d.w as isize {
                                *v = in_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    (out, ho, wo)
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input grid.
fn col2im<T: Float>(cols: &[T], input: Dims, stride: usize) -> Tensor<T> {
    let d = input;
    let (ho, wo) = (out_extent(d.h, stride), out_extent(d.w, stride));
    let ncols = d.n * ho * wo;
    let mut dx = Tensor::alloc(d);
    let dst = dx.data_mut();
    for c in 0..d.c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((c * 9) + ky * 3 + kx) * ncols..][..ncols];
                for n in 0..d.n {
                    let plane = &mut dst[(n * d.c + c) * d.h * d.w..][..d.h * d.w];
                    for oy in 0..ho {
                        let iy = (oy * stride + ky) as isize - 1;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        let in_row = &mut plane[iy as usize * d.w..][..d.w];
                        let src = &row[(n * ho + oy) * wo..][..wo];
                        for (ox, &g) in src.iter().enumerate() {
                            let ix = (ox * stride + kx) as isize - 1;
                            if ix >= 0 && ix < d.w as isize {
                                in_row[ix as usize] += g;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

fn add_row_bias<T: Float>(buf: &mut [T], bias: &[T]) {
    let cols = buf.len() / bias.len();
    for (row, &b) in buf.chunks_exact_mut(cols).zip(bias) {
        row.iter_mut().for_each(|v| *v += b);
    }
}

fn row_sums<T: Float>(buf: &[T], rows: usize) -> Vec<T> {
    let cols = buf.len() / rows;
    buf.chunks_exact(cols).map(|r| r.iter().copied().sum()).collect()
}

pub(super) fn conv3x3<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    out_dims: Dims,
) -> Tensor<T> {
    let cin = x.dims().c;
    let cout = out_dims.c;
    let (cols, _, _) = im2col(x, stride);
    let ncols = cols.len() / (cin * 9);
    let mut out = vec![T::ZERO; cout * ncols];
    gemm_nn(cout, ncols, cin * 9, weight.data(), &cols, &mut out, false);
    add_row_bias(&mut out, bias.data());
    cn_to_nchw(&out, out_dims)
}

/// Returns `(dx, dweight, dbias)`.
pub(super) fn conv3x3_backward<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad: &Tensor<T>,
    stride: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let cin = x.dims().c;
    let cout = grad.dims().c;
    let k = cin * 9;
    let (cols, _, _) = im2col(x, stride);
    let ncols = cols.len() / k;
    let g = nchw_to_cn(grad);

    let mut dw = Tensor::alloc(weight.dims());
    gemm_nt(cout, k, ncols, &g, &cols, dw.data_mut(), false);
    let db = Tensor::from_parts(Dims::of(1, 1, 1, cout), row_sums(&g, cout));

    let wt = transpose(cout, k, weight.data());
    let mut dcols = cols;
    gemm_nn(k, ncols, cout, &wt, &g, &mut dcols, false);
    (col2im(&dcols, x.dims(), stride), dw, db)
}

/// Per-channel 3×3 convolution; `weight` is `(C, 1, 3, 3)`.
pub(super) fn depthwise3x3<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Tensor<T> {
    let d = x.dims();
    let (ho, wo) = (out_extent(d.h, stride), out_extent(d.w, stride));
    let mut out = Tensor::alloc(Dims::of(d.n, d.c, ho, wo));
    let (src, w, b) = (x.data(), weight.data(), bias.data());
    let dst = out.data_mut();
    for n in 0..d.n {
        for c in 0..d.c {
            let plane = &src[(n * d.c + c) * d.h * d.w..][..d.h * d.w];
            let k = &w[c * 9..c * 9 + 9];
            let o = &mut dst[(n * d.c + c) * ho * wo..][..ho * wo];
            o.iter_mut().for_each(|v| *v = b[c]);
            for ky in 0..3 {
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let in_row = &plane[iy as usize * d.w..][..d.w];
                    let out_row = &mut o[oy * wo..][..wo];
                    for kx in 0..3 {
                        let kv = k[ky * 3 + kx];
                        for (ox, v) in out_row.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - 1;
                            if ix >= 0 && ix < d.w as isize {
                                *v += kv * in_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns `(dx, dweight, dbias)` for [`depthwise3x3`].
pub(super) fn depthwise3x3_backward<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad: &Tensor<T>,
    stride: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let d = x.dims();
    let gd = grad.dims();
    let (ho, wo) = (gd.h, gd.w);
    let mut dx = Tensor::alloc(d);
    let mut dw = Tensor::alloc(weight.dims());
    let mut db = Tensor::alloc(Dims::of(1, 1, 1, d.c));
    let (src, w, g) = (x.data(), weight.data(), grad.data());
    for n in 0..d.n {
        for c in 0..d.c {
            let base = (n * d.c + c) * d.h * d.w;
            let gplane = &g[(n * d.c + c) * ho * wo..][..ho * wo];
            db.data_mut()[c] += gplane.iter().copied().sum();
            for ky in 0..3 {
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let row_off = base + iy as usize * d.w;
                    let grow = &gplane[oy * wo..][..wo];
                    for kx in 0..3 {
                        let kv = w[c * 9 + ky * 3 + kx];
                        let mut acc = T::ZERO;
                        let dxd = dx.data_mut();
                        for (ox, &gv) in grow.iter().enumerate() {
                            let ix = (ox * stride + kx) as isize - 1;
                            if ix >= 0 && ix < d.w as isize {
                                let idx = row_off + ix as usize;
                                acc += gv * src[idx];
                                dxd[idx] += gv * kv;
                            }
                        }
                        dw.data_mut()[c * 9 + ky * 3 + kx] += acc;
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// 1×1 convolution; `weight` is `(Cout, Cin, 1, 1)`.
pub(super) fn pointwise<T: Float>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Tensor<T> {
    let d = x.dims();
    let cout = weight.dims().n;
    let np = d.n * d.plane();
    let xc = nchw_to_cn(x);
    let mut out = vec![T::ZERO; cout * np];
    gemm_nn(cout, np, d.c, weight.data(), &xc, &mut out, false);
    add_row_bias(&mut out, bias.data());
    cn_to_nchw(&out, Dims::of(d.n, cout, d.h, d.w))
}

/// Returns `(dx, dweight, dbias)` for [`pointwise`].
pub(super) fn pointwise_backward<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let d = x.dims();
    let cout = weight.dims().n;
    let np = d.n * d.plane();
    let xc = nchw_to_cn(x);
    let g = nchw_to_cn(grad);
    let mut dw = Tensor::alloc(weight.dims());
    gemm_nt(cout, d.c, np, &g, &xc, dw.data_mut(), false);
    let db = Tensor::from_parts(Dims::of(1, 1, 1, cout), row_sums(&g, cout));
    let wt = transpose(cout, d.c, weight.data());
    let mut dxc = xc;
    gemm_nn(d.c, np, cout, &wt, &g, &mut dxc, false);
    (cn_to_nchw(&dxc, d), dw, db)
}
