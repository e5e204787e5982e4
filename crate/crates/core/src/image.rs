//! Bilinear sampling on single-channel row-major images.

/// How out-of-range coordinates are mapped back into the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Border {
    /// Repeat the edge pixel.
    Clamp,
    /// Mirror about the edge pixel without repeating it.
    Reflect,
}

fn wrap(i: isize, n: usize, border: Border) -> usize {
    if n == 1 {
        return 0;
    }
    let last = n as isize - 1;
    match border {
        Border::Clamp => i.clamp(0, last) as usize,
        Border::Reflect => {
            let period = 2 * last;
            let m = i.rem_euclid(period);
            (if m > last { period - m } else { m }) as usize
        }
    }
}

/// Value at fractional pixel coordinates `(y, x)`, pixel centers at integers.
pub(crate) fn sample_bilinear(src: &[f32], h: usize, w: usize, y: f64, x: f64, border: Border) -> f32 {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let (y0, x0) = (y0 as isize, x0 as isize);
    let at = |yy: isize, xx: isize| src[wrap(yy, h, border) * w + wrap(xx, w, border)] as f64;
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
    let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
    (top * (1.0 - fy) + bottom * fy) as f32
}

/// Bilinear resize with half-pixel centers. Same-size input is copied unchanged.
pub(crate) fn resize_bilinear(src: &[f32], h: usize, w: usize, nh: usize, nw: usize) -> Vec<f32> {
    if (h, w) == (nh, nw) {
        return src.to_vec();
    }
    let (sy, sx) = (h as f64 / nh as f64, w as f64 / nw as f64);
    let mut out = Vec::with_capacity(nh * nw);
    for r in 0..nh {
        let y = (r as f64 + 0.5) * sy - 0.5;
        for c in 0..nw {
            let x = (c as f64 + 0.5) * sx - 0.5;
            out.push(sample_bilinear(src, h, w, y, x, Border::Clamp));
        }
    }
    out
}
