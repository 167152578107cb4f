//! Orthonormal DCT-II and zigzag scans for the two macroblock partitions.
//!
//! Coefficient layout: `T16` stores the 16x16 coefficient matrix
//! row-major. `T4` stores the sixteen 4x4 units in raster order, each unit
//! holding its 4x4 coefficients row-major, so unit `u` occupies
//! `16u..16u + 16`.

use super::ModeId;
use crate::image::{Block, BLOCK_PIXELS, BLOCK_SIZE};
use crate::scalar::Real;

/// `n x n` orthonormal DCT-II matrix `C`, row-major; coefficients are `C x`.
pub fn dct_matrix<T: Real>(n: usize) -> Vec<T> {
    let mut m = vec![T::zero(); n * n];
    let nf = n as f64;
    for k in 0..n {
        let alpha = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for i in 0..n {
            let angle = std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf);
            m[k * n + i] = T::lit(alpha * angle.cos());
        }
    }
    m
}

/// `out = C * tile * C^T` (forward) or `C^T * tile * C` (inverse) on an
/// `n x n` tile embedded with row stride `stride`.
fn separable<T: Real>(c: &[T], n: usize, src: &[T], dst: &mut [T], stride: usize, inverse: bool) {
    let mut tmp = [T::zero(); BLOCK_PIXELS];
    // rows: tmp[k][x] = sum_y C'[k][y] src[y][x]
    for k in 0..n {
        for x in 0..n {
            let mut acc = T::zero();
            for y in 0..n {
                let ck = if inverse { c[y * n + k] } else { c[k * n + y] };
                acc += ck * src[y * stride + x];
            }
            tmp[k * n + x] = acc;
        }
    }
    for k in 0..n {
        for l in 0..n {
            let mut acc = T::zero();
            for x in 0..n {
                let cl = if inverse { c[x * n + l] } else { c[l * n + x] };
                acc += tmp[k * n + x] * cl;
            }
            dst[k * stride + l] = acc;
        }
    }
}

/// Precomputed transform matrices for both partition modes.
#[derive(Clone, Debug)]
pub struct Transforms<T> {
    c4: Vec<T>,
    c16: Vec<T>,
}

impl<T: Real> Default for Transforms<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Transforms<T> {
    pub fn new() -> Self {
        Transforms {
            c4: dct_matrix(4),
            c16: dct_matrix(16),
        }
    }

    /// Pixel block (row-major) to coefficients in the mode's layout.
    pub fn forward(&self, block: &[T], mode: ModeId) -> Block<T> {
        assert_eq!(block.len(), BLOCK_PIXELS);
        let mut out = [T::zero(); BLOCK_PIXELS];
        match mode {
            ModeId::T16 => separable(&self.c16, 16, block, &mut out, 16, false),
            ModeId::T4 => {
                let mut tile = [T::zero(); 16];
                let mut coeffs = [T::zero(); 16];
                for u in 0..16 {
                    let (ux, uy) = ((u % 4) * 4, (u / 4) * 4);
                    for r in 0..4 {
                        tile[r * 4..r * 4 + 4].copy_from_slice(&block[(uy + r) * BLOCK_SIZE + ux..][..4]);
                    }
                    separable(&self.c4, 4, &tile, &mut coeffs, 4, false);
                    out[u * 16..u * 16 + 16].copy_from_slice(&coeffs);
                }
            }
        }
        out
    }

    /// Coefficients in the mode's layout back to a row-major pixel block.
    pub fn inverse(&self, coeffs: &[T], mode: ModeId) -> Block<T> {
        assert_eq!(coeffs.len(), BLOCK_PIXELS);
        let mut out = [T::zero(); BLOCK_PIXELS];
        match mode {
            ModeId::T16 => separable(&self.c16, 16, coeffs, &mut out, 16, true),
            ModeId::T4 => {
                let mut tile = [T::zero(); 16];
                for u in 0..16 {
                    let (ux, uy) = ((u % 4) * 4, (u / 4) * 4);
                    separable(&self.c4, 4, &coeffs[u * 16..u * 16 + 16], &mut tile, 4, true);
                    for r in 0..4 {
                        out[(uy + r) * BLOCK_SIZE + ux..][..4].copy_from_slice(&tile[r * 4..r * 4 + 4]);
                    }
                }
            }
        }
        out
    }
}

/// Forward transform with freshly built matrices.
pub fn dct_forward<T: Real>(block: &[T], mode: ModeId) -> Block<T> {
    Transforms::new().forward(block, mode)
}

pub fn dct_inverse<T: Real>(coeffs: &[T], mode: ModeId) -> Block<T> {
    Transforms::new().inverse(coeffs, mode)
}

/// JPEG zigzag order of an `n x n` matrix as row-major indices.
pub fn zigzag(n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n * n);
    for s in 0..(2 * n - 1) {
        let r_lo = s.saturating_sub(n - 1);
        let r_hi = s.min(n - 1);
        if s % 2 == 1 {
            for r in r_lo..=r_hi {
                out.push(r * n + (s - r));
            }
        } else {
            for r in (r_lo..=r_hi).rev() {
                out.push(r * n + (s - r));
            }
        }
    }
    out
}

/// Coefficient indices of each transform unit in scan order.
pub fn scan_units(mode: ModeId) -> Vec<Vec<usize>> {
    match mode {
        ModeId::T16 => vec![zigzag(16)],
        ModeId::T4 => {
            let z = zigzag(4);
            (0..16).map(|u| z.iter().map(|&k| u * 16 + k).collect()).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed | 1;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                ((s >> 40) as f64 / (1u64 << 24) as f64) * 510.0 - 255.0
            })
            .collect()
    }

    /// Dense 256x256 matrix `M` with `coeffs = M * pixels`, built from
    /// Kronecker products of the 1-D DCT.
    fn dense_transform(mode: ModeId) -> Vec<f64> {
        let mut m = vec![0.0; 256 * 256];
        match mode {
            ModeId::T16 => {
                let c = dct_matrix::<f64>(16);
                for (k, l) in (0..16).flat_map(|k| (0..16).map(move |l| (k, l))) {
                    for (y, x) in (0..16).flat_map(|y| (0..16).map(move |x| (y, x))) {
                        m[(k * 16 + l) * 256 + y * 16 + x] = c[k * 16 + y] * c[l * 16 + x];
                    }
                }
            }
            ModeId::T4 => {
                let c = dct_matrix::<f64>(4);
                for u in 0..16 {
                    let (ux, uy) = ((u % 4) * 4, (u / 4) * 4);
                    for (k, l) in (0..4).flat_map(|k| (0..4).map(move |l| (k, l))) {
                        for (y, x) in (0..4).flat_map(|y| (0..4).map(move |x| (y, x))) {
                            m[(u * 16 + k * 4 + l) * 256 + (uy + y) * 16 + ux + x] = c[k * 4 + y] * c[l * 4 + x];
                        }
                    }
                }
            }
        }
        m
    }

    #[test]
    fn constant_block_has_only_dc() {
        let block = [3.0f64; 256];
        let y = dct_forward(&block, ModeId::T16);
        assert!((y[0] - 48.0).abs() < 1e-12);
        assert!(y[1..].iter().all(|v| v.abs() < 1e-12));
        let y4 = dct_forward(&block, ModeId::T4);
        for u in 0..16 {
            assert!((y4[u * 16] - 12.0).abs() < 1e-12);
            assert!(y4[u * 16 + 1..u * 16 + 16].iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn matches_dense_kronecker_and_inverts() {
        let t = Transforms::<f64>::new();
        for mode in [ModeId::T16, ModeId::T4] {
            let m = dense_transform(mode);
            for seed in 0..5 {
                let x = lcg(256, seed);
                let y = t.forward(&x, mode);
                for r in 0..256 {
                    let oracle: f64 = (0..256).map(|p| m[r * 256 + p] * x[p]).sum();
                    assert!((y[r] - oracle).abs() < 1e-12 * 255.0 * 16.0);
                }
                let n_x: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let n_y: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((n_x - n_y).abs() <= 1e-12 * n_x);
                let back = t.inverse(&y, mode);
                for (a, b) in back.iter().zip(&x) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn zigzag_is_jpeg_order() {
        assert_eq!(zigzag(4), vec![0, 1, 4, 8, 5, 2, 3, 6, 9, 12, 13, 10, 7, 11, 14, 15]);
        let z = zigzag(16);
        let mut seen = z.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..256).collect::<Vec<_>>());
        assert_eq!(&z[..6], &[0, 1, 16, 32, 17, 2]);
        assert_eq!(*z.last().unwrap(), 255);
    }
}
