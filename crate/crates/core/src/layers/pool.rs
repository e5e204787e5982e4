use crate::tensor::{Dims, Float, Tensor};

/// Binomial taps of the BlurPool filter; the 2-D kernel is their outer product.
pub const BLUR_KERNEL_1D: [f64; 3] = [1.0, 2.0, 1.0];
/// Sum of the 2-D blur kernel taps.
pub const BLUR_NORM: f64 = 16.0;

/// Reflect (without edge repeat) an index in `[-1, len]` into `[0, len)`.
#[inline]
fn reflect(i: isize, len: usize) -> usize {
    if i < 0 {
        (-i) as usize
    } else if i as usize >= len {
        2 * len - 2 - i as usize
    } else {
        i as usize
    }
}

/// 2×2 stride-2 max pooling in ceil mode; windows are clipped at the border.
/// Returns the output and, per output element, the flat input index of its max.
pub(super) fn max_pool2<T: Float>(x: &Tensor<T>, out_dims: Dims) -> (Tensor<T>, Vec<usize>) {
    let d = x.dims();
    let mut out = Tensor::alloc(out_dims);
    let mut argmax = vec![0usize; out_dims.len()];
    let src = x.data();
    let dst = out.data_mut();
    let mut o = 0;
    for nc in 0..d.n * d.c {
        let base = nc * d.h * d.w;
        for oy in 0..out_dims.h {
            for ox in 0..out_dims.w {
                let mut best = base + 2 * oy * d.w + 2 * ox;
                for iy in 2 * oy..(2 * oy + 2).min(d.h) {
                    for ix in 2 * ox..(2 * ox + 2).min(d.w) {
                        let i = base + iy * d.w + ix;
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                }
                dst[o] = src[best];
                argmax[o] = best;
                o += 1;
            }
        }
    }
    (out, argmax)
}

pub(super) fn max_pool2_backward<T: Float>(input: Dims, argmax: &[usize], grad: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::alloc(input);
    let dst = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(grad.data()) {
        dst[i] += g;
    }
    dx
}

fn blur_taps<T: Float>() -> [[T; 3]; 3] {
    let mut k = [[T::ZERO; 3]; 3];
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = T::from_f64(BLUR_KERNEL_1D[i] * BLUR_KERNEL_1D[j] / BLUR_NORM);
        }
    }
    k
}

/// Depth-wise binomial blur with reflect padding, evaluated only at the
/// stride-2 sample points.
pub(super) fn blur_pool2<T: Float>(x: &Tensor<T>, out_dims: Dims) -> Tensor<T> {
    let d = x.dims();
    let k = blur_taps::<T>();
    let mut out = Tensor::alloc(out_dims);
    let src = x.data();
    let dst = out.data_mut();
    let mut o = 0;
    for nc in 0..d.n * d.c {
        let plane = &src[nc * d.h * d.w..][..d.h * d.w];
        for oy in 0..out_dims.h {
            for ox in 0..out_dims.w {
                let mut acc = T::ZERO;
                for (ky, krow) in k.iter().enumerate() {
                    let iy = reflect((2 * oy + ky) as isize - 1, d.h);
                    for (kx, &kv) in krow.iter().enumerate() {
                        let ix = reflect((2 * ox + kx) as isize - 1, d.w);
                        acc += kv * plane[iy * d.w + ix];
                    }
                }
                dst[o] = acc;
                o += 1;
            }
        }
    }
    out
}

pub(super) fn blur_pool2_backward<T: Float>(input: Dims, grad: &Tensor<T>) -> Tensor<T> {
    let gd = grad.dims();
    let k = blur_taps::<T>();
    let mut dx = Tensor::alloc(input);
    let dst = dx.data_mut();
    let g = grad.data();
    let mut o = 0;
    for nc in 0..input.n * input.c {
        let plane = &mut dst[nc * input.h * input.w..][..input.h * input.w];
        for oy in 0..gd.h {
            for ox in 0..gd.w {
                let gv = g[o];
                for (ky, krow) in k.iter().enumerate() {
                    let iy = reflect((2 * oy + ky) as isize - 1, input.h);
                    for (kx, &kv) in krow.iter().enumerate() {
                        let ix = reflect((2 * ox + kx) as isize - 1, input.w);
                        plane[iy * input.w + ix] += kv * gv;
                    }
                }
                o += 1;
            }
        }
    }
    dx
}

pub(super) fn gap<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let d = x.dims();
    let plane = d.plane();
    let count = T::from_usize(plane);
    let data = x.data().chunks_exact(plane).map(|p| p.iter().copied().sum::<T>() / count).collect();
    Tensor::from_parts(Dims::of(d.n, d.c, 1, 1), data)
}

pub(super) fn gap_backward<T: Float>(input: Dims, grad: &Tensor<T>) -> Tensor<T> {
    let plane = input.plane();
    let count = T::from_usize(plane);
    let mut dx = Tensor::alloc(input);
    for (chunk, &g) in dx.data_mut().chunks_exact_mut(plane).zip(grad.data()) {
        let share = g / count;
        chunk.iter_mut().for_each(|v| *v = share);
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::reflect;

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 4), 1);
        assert_eq!(reflect(0, 4), 0);
        assert_eq!(reflect(3, 4), 3);
        assert_eq!(reflect(4, 4), 2);
        assert_eq!(reflect(2, 2), 0);
    }
}
