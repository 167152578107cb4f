//! Dense CHW kernels for [`super::FeatNet`].

use super::ConvWeights;
use crate::scalar::Real;

/// Row/column span touched by tap offset `d` in an axis of length `n`.
#[inline]
fn span(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d.max(0)).max(0) as usize;
    (lo, hi.max(lo))
}

/// 3x3 same-size convolution. Returns the output and the MACs executed.
pub(super) fn conv_forward<T: Real>(
    w: &ConvWeights<T>,
    input: &[T],
    h: usize,
    wd: usize,
    with_bias: bool,
) -> (Vec<T>, u64) {
    let plane = h * wd;
    debug_assert_eq!(input.len(), w.in_ch * plane);
    let mut out = vec![T::zero(); w.out_ch * plane];
    let mut macs = 0u64;
    for o in 0..w.out_ch {
        let dst = &mut out[o * plane..][..plane];
        if with_bias {
            dst.fill(w.bias[o]);
        }
        for i in 0..w.in_ch {
            let src = &input[i * plane..][..plane];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = span(h, dy);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = span(wd, dx);
                    let tap = w.tap(o, i, ky, kx);
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let srow = &src[sy * wd..][..wd];
                        let drow = &mut dst[y * wd..][..wd];
                        for x in x0..x1 {
                            drow[x] += tap * srow[(x as isize + dx) as usize];
                        }
                    }
                    macs += ((y1 - y0) * (x1 - x0)) as u64;
                }
            }
        }
    }
    (out, macs)
}

/// Transposed 3x3 convolution: gradient of the input given the output gradient.
pub(super) fn conv_backward<T: Real>(w: &ConvWeights<T>, grad_out: &[T], h: usize, wd: usize) -> (Vec<T>, u64) {
    let plane = h * wd;
    debug_assert_eq!(grad_out.len(), w.out_ch * plane);
    let mut grad_in = vec![T::zero(); w.in_ch * plane];
    let mut macs = 0u64;
    for i in 0..w.in_ch {
        let dst = &mut grad_in[i * plane..][..plane];
        for o in 0..w.out_ch {
            let src = &grad_out[o * plane..][..plane];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = span(h, dy);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = span(wd, dx);
                    let tap = w.tap(o, i, ky, kx);
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let grow = &src[y * wd..][..wd];
                        let drow = &mut dst[sy * wd..][..wd];
                        for x in x0..x1 {
                            drow[(x as isize + dx) as usize] += tap * grow[x];
                        }
                    }
                    macs += ((y1 - y0) * (x1 - x0)) as u64;
                }
            }
        }
    }
    (grad_in, macs)
}

pub(super) fn relu<T: Real>(v: &[T]) -> Vec<T> {
    v.iter().map(|&z| z.max(T::zero())).collect()
}

pub(super) fn relu_in_place<T: Real>(v: &mut [T]) {
    for z in v {
        *z = z.max(T::zero());
    }
}

#[inline]
pub(super) fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + exp(beta z)) / beta`, evaluated without overflow.
pub(super) fn softplus<T: Real>(v: &[T], beta: T) -> Vec<T> {
    v.iter()
        .map(|&z| {
            let bz = beta * z;
            if bz > T::zero() {
                z + (-bz).exp().ln_1p() / beta
            } else {
                bz.exp().ln_1p() / beta
            }
        })
        .collect()
}

pub(super) fn avg_pool_forward<T: Real>(v: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::lit(0.25);
    let mut out = vec![T::zero(); c * oh * ow];
    for ch in 0..c {
        let src = &v[ch * h * w..][..h * w];
        let dst = &mut out[ch * oh * ow..][..oh * ow];
        for y in 0..oh {
            let r0 = &src[2 * y * w..][..w];
            let r1 = &src[(2 * y + 1) * w..][..w];
            for x in 0..ow {
                dst[y * ow + x] = (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]) * quarter;
            }
        }
    }
    out
}

/// Gradient of 2x2 average pooling; `h x w` is the pre-pool size.
pub(super) fn avg_pool_backward<T: Real>(g: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::lit(0.25);
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        let src = &g[ch * oh * ow..][..oh * ow];
        let dst = &mut out[ch * h * w..][..h * w];
        for y in 0..h {
            for x in 0..w {
                dst[y * w + x] = src[(y / 2) * ow + x / 2] * quarter;
            }
        }
    }
    out
}
