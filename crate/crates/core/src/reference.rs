//! Direct-loop implementations kept as test oracles for the production
//! kernels. They share no code with `layers` and favour obviousness over
//! speed.

use crate::tensor::{Dims, Float, Tensor};

/// Triple-loop `a[m×k] · b[k×n]`.
pub fn matmul<T: Float>(m: usize, k: usize, n: usize, a: &[T], b: &[T]) -> Vec<T> {
    let mut c = vec![T::ZERO; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = T::ZERO;
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            c[i * n + j] = acc;
        }
    }
    c
}

fn padded<T: Float>(x: &Tensor<T>, n: usize, c: usize, y: isize, xx: isize) -> T {
    let d = x.dims();
    if y < 0 || xx < 0 || y >= d.h as isize || xx >= d.w as isize {
        T::ZERO
    } else {
        x.get(n, c, y as usize, xx as usize)
    }
}

/// Cross-correlation with a `(Cout, Cin, 3, 3)` kernel, zero padding 1.
pub fn conv3x3<T: Float>(x: &Tensor<T>, weight: &Tensor<T>, bias: &[T], stride: usize) -> Tensor<T> {
    let d = x.dims();
    let cout = weight.dims().n;
    let (ho, wo) = ((d.h - 1) / stride + 1, (d.w - 1) / stride + 1);
    let mut out = Tensor::zeros(Dims::of(d.n, cout, ho, wo)).unwrap();
    for n in 0..d.n {
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias[co];
                    for ci in 0..d.c {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * stride + ky) as isize - 1;
                                let ix = (ox * stride + kx) as isize - 1;
                                acc += weight.get(co, ci, ky, kx) * padded(x, n, ci, iy, ix);
                            }
                        }
                    }
                    out.set(n, co, oy, ox, acc);
                }
            }
        }
    }
    out
}

/// Per-channel 3×3 with a `(C, 1, 3, 3)` kernel.
pub fn depthwise3x3<T: Float>(x: &Tensor<T>, weight: &Tensor<T>, bias: &[T], stride: usize) -> Tensor<T> {
    let d = x.dims();
    let (ho, wo) = ((d.h - 1) / stride + 1, (d.w - 1) / stride + 1);
    let mut out = Tensor::zeros(Dims::of(d.n, d.c, ho, wo)).unwrap();
    for n in 0..d.n {
        for c in 0..d.c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias[c];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = (oy * stride + ky) as isize - 1;
                            let ix = (ox * stride + kx) as isize - 1;
                            acc += weight.get(c, 0, ky, kx) * padded(x, n, c, iy, ix);
                        }
                    }
                    out.set(n, c, oy, ox, acc);
                }
            }
        }
    }
    out
}

/// 1×1 convolution with a `(Cout, Cin, 1, 1)` kernel.
pub fn pointwise<T: Float>(x: &Tensor<T>, weight: &Tensor<T>, bias: &[T]) -> Tensor<T> {
    let d = x.dims();
    let cout = weight.dims().n;
    let mut out = Tensor::zeros(Dims::of(d.n, cout, d.h, d.w)).unwrap();
    for n in 0..d.n {
        for co in 0..cout {
            for y in 0..d.h {
                for xx in 0..d.w {
                    let mut acc = bias[co];
                    for ci in 0..d.c {
                        acc += weight.get(co, ci, 0, 0) * x.get(n, ci, y, xx);
                    }
                    out.set(n, co, y, xx, acc);
                }
            }
        }
    }
    out
}

/// Two-stage oracle: per-channel 3×3, then 1×1.
pub fn depthwise_separable<T: Float>(x: &Tensor<T>, params: &[Tensor<T>], stride: usize) -> Tensor<T> {
    let mid = depthwise3x3(x, &params[0], params[1].data(), stride);
    pointwise(&mid, &params[2], params[3].data())
}

/// Full-resolution binomial blur (reflect padding), then every second pixel.
pub fn blur_pool2<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let d = x.dims();
    let taps = [1.0, 2.0, 1.0];
    let refl = |i: isize, len: usize| -> usize {
        if i < 0 {
            1
        } else if i as usize == len {
            len - 2
        } else {
            i as usize
        }
    };
    let mut blurred = Tensor::zeros(d).unwrap();
    for n in 0..d.n {
        for c in 0..d.c {
            for y in 0..d.h {
                for xx in 0..d.w {
                    let mut acc = T::ZERO;
                    for dy in 0..3 {
                        for dx in 0..3 {
                            let iy = refl(y as isize + dy as isize - 1, d.h);
                            let ix = refl(xx as isize + dx as isize - 1, d.w);
                            acc += T::from_f64(taps[dy] * taps[dx] / 16.0) * x.get(n, c, iy, ix);
                        }
                    }
                    blurred.set(n, c, y, xx, acc);
                }
            }
        }
    }
    let (ho, wo) = (d.h.div_ceil(2), d.w.div_ceil(2));
    let mut out = Tensor::zeros(Dims::of(d.n, d.c, ho, wo)).unwrap();
    for n in 0..d.n {
        for c in 0..d.c {
            for y in 0..ho {
                for xx in 0..wo {
                    out.set(n, c, y, xx, blurred.get(n, c, 2 * y, 2 * xx));
                }
            }
        }
    }
    out
}

/// Per-channel `sum / (h·w)`.
pub fn gap<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let d = x.dims();
    let mut out = Tensor::zeros(Dims::of(d.n, d.c, 1, 1)).unwrap();
    for n in 0..d.n {
        for c in 0..d.c {
            let mut sum = T::ZERO;
            for y in 0..d.h {
                for xx in 0..d.w {
                    sum += x.get(n, c, y, xx);
                }
            }
            out.set(n, c, 0, 0, sum / T::from_usize(d.h * d.w));
        }
    }
    out
}
