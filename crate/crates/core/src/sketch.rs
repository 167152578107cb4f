//! Random projections `S` that shrink `n_f` feature dimensions to `ell`
//! while approximately preserving squared distances.
//!
//! Entries come from a ChaCha8 stream seeded with the spec's seed, so a
//! given `(kind, ell, seed, n_f)` reproduces the same matrix on every
//! platform. Rademacher entries are `±1/√ell`, Gaussian entries are
//! `N(0, 1/ell)`; both make `E‖Sz‖² = ‖z‖²`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codec::dct::dct_matrix;
use crate::error::{Error, Result};
use crate::featnet::FeatureShape;
use crate::scalar::{dot, Real};

/// Identity of the pseudo-random generator behind every sketch.
pub const GENERATOR_ID: &str = "chacha8-rand_chacha-0.9";

/// DCT coefficients kept per feature channel by [`SketchKind::DctTop16`].
pub const DCT_KEEP: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SketchKind {
    Rademacher,
    Gaussian,
    /// Per-channel spatial DCT of the features, keep the 16 largest
    /// coefficients of each channel, then a Rademacher reduction.
    DctTop16,
}

impl SketchKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SketchKind::Rademacher => "rademacher",
            SketchKind::Gaussian => "gaussian",
            SketchKind::DctTop16 => "dcttop16",
        }
    }
}

impl fmt::Display for SketchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SketchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rademacher" => Ok(SketchKind::Rademacher),
            "gaussian" => Ok(SketchKind::Gaussian),
            "dcttop16" | "dct-top16" | "dct" => Ok(SketchKind::DctTop16),
            _ => Err(Error::invalid(format!("unknown sketch kind {s:?}"))),
        }
    }
}

/// Everything that determines a sketch except the source dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SketchParams {
    pub kind: SketchKind,
    pub ell: usize,
    pub seed: u64,
}

impl SketchParams {
    pub fn new(kind: SketchKind, ell: usize, seed: u64) -> Self {
        SketchParams { kind, ell, seed }
    }

    pub fn with_dim(&self, n_f: usize) -> SketchSpec {
        SketchSpec {
            kind: self.kind,
            ell: self.ell,
            seed: self.seed,
            n_f,
        }
    }
}

impl Default for SketchParams {
    fn default() -> Self {
        SketchParams::new(SketchKind::Rademacher, 8, 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SketchSpec {
    pub kind: SketchKind,
    pub ell: usize,
    pub seed: u64,
    pub n_f: usize,
}

/// Smallest integer `ell > 8 ln(n_r) / eps²`.
pub fn jl_min_dim(n_r: usize, epsilon: f64) -> Result<usize> {
    if n_r < 2 {
        return Err(Error::invalid("need at least two points"));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::invalid("epsilon must lie in (0, 1]"));
    }
    let bound = 8.0 * (n_r as f64).ln() / (epsilon * epsilon);
    Ok(bound.floor() as usize + 1)
}

/// A dense `ell x n_f` sketch.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
    /// Feature indices retained by an adaptive sketch, in selection order.
    selection: Option<Vec<usize>>,
}

impl<T: Real> SketchMatrix<T> {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} entries cannot form a {rows} x {cols} sketch",
                data.len()
            )));
        }
        Ok(SketchMatrix {
            rows,
            cols,
            data,
            selection: None,
        })
    }

    /// `S = I`, the unsketched Jacobian.
    pub fn identity(n: usize) -> Self {
        let mut data = vec![T::zero(); n * n];
        for k in 0..n {
            data[k * n + k] = T::one();
        }
        SketchMatrix {
            rows: n,
            cols: n,
            data,
            selection: None,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, j: usize) -> &[T] {
        &self.data[j * self.cols..][..self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn selection(&self) -> Option<&[usize]> {
        self.selection.as_deref()
    }

    /// `S z`.
    pub fn apply(&self, z: &[T]) -> Result<Vec<T>> {
        if z.len() != self.cols {
            return Err(Error::shape(format!(
                "sketch expects {} inputs, got {}",
                self.cols,
                z.len()
            )));
        }
        Ok((0..self.rows).map(|j| dot(self.row(j), z)).collect())
    }
}

fn rademacher_fill<T: Real>(rng: &mut ChaCha8Rng, out: &mut [T], scale: T) {
    for chunk in out.chunks_mut(64) {
        let bits: u64 = rng.random();
        for (k, v) in chunk.iter_mut().enumerate() {
            *v = if (bits >> k) & 1 == 1 { scale } else { -scale };
        }
    }
}

impl SketchSpec {
    pub fn new(kind: SketchKind, ell: usize, seed: u64, n_f: usize) -> Self {
        SketchSpec { kind, ell, seed, n_f }
    }

    pub fn params(&self) -> SketchParams {
        SketchParams::new(self.kind, self.ell, self.seed)
    }

    fn validate(&self) -> Result<()> {
        if self.ell == 0 || self.ell > self.n_f {
            return Err(Error::invalid(format!(
                "sketch dimension {} must lie in [1, {}]",
                self.ell, self.n_f
            )));
        }
        Ok(())
    }

    /// Builds a data-independent sketch. `DctTop16` needs the features; use
    /// [`SketchSpec::materialize_for`].
    pub fn materialize<T: Real>(&self) -> Result<SketchMatrix<T>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let scale = T::lit(1.0 / (self.ell as f64).sqrt());
        let mut data = vec![T::zero(); self.ell * self.n_f];
        match self.kind {
            SketchKind::Rademacher => rademacher_fill(&mut rng, &mut data, scale),
            SketchKind::Gaussian => {
                for v in data.iter_mut() {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    *v = T::lit(g) * scale;
                }
            }
            SketchKind::DctTop16 => {
                return Err(Error::invalid("dcttop16 sketches depend on the image features"));
            }
        }
        SketchMatrix::from_rows(self.ell, self.n_f, data)
    }

    /// Builds the sketch for a specific feature map.
    ///
    /// For `DctTop16`, each channel's `h x w` map is transformed with an
    /// orthonormal 2-D DCT, the 16 largest-magnitude coefficients are kept
    /// (ties broken towards the lower index) and a `±1/√ell` Rademacher
    /// matrix reduces the `16 C` retained coefficients to `ell`.
    pub fn materialize_for<T: Real>(&self, shape: FeatureShape, features: &[T]) -> Result<SketchMatrix<T>> {
        if shape.len() != self.n_f || features.len() != self.n_f {
            return Err(Error::shape(format!(
                "feature layout {}x{}x{} does not split {} features into channels",
                shape.channels, shape.height, shape.width, self.n_f
            )));
        }
        if self.kind != SketchKind::DctTop16 {
            return self.materialize();
        }
        let (h, w) = (shape.height, shape.width);
        let plane = shape.plane();
        let keep = DCT_KEEP.min(plane);
        let retained = keep * shape.channels;
        if self.ell == 0 || self.ell > retained {
            return Err(Error::invalid(format!(
                "dcttop16 sketch dimension {} must lie in [1, {retained}]",
                self.ell
            )));
        }
        let ch: Vec<T> = dct_matrix(h);
        let cw: Vec<T> = dct_matrix(w);
        let mut selection = Vec::with_capacity(retained);
        for c in 0..shape.channels {
            let map = &features[c * plane..][..plane];
            // coefficient (u, v) = sum_{y,x} ch[u][y] cw[v][x] map[y][x]
            let mut tmp = vec![T::zero(); plane];
            for u in 0..h {
                for x in 0..w {
                    tmp[u * w + x] = (0..h).map(|y| ch[u * h + y] * map[y * w + x]).sum();
                }
            }
            let mut coeffs: Vec<(usize, T)> = (0..plane)
                .map(|k| {
                    let (u, v) = (k / w, k % w);
                    (k, (0..w).map(|x| tmp[u * w + x] * cw[v * w + x]).sum::<T>())
                })
                .collect();
            coeffs.sort_by(|a, b| {
                b.1.abs()
                    .partial_cmp(&a.1.abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.0.cmp(&b.0))
            });
            selection.extend(coeffs[..keep].iter().map(|&(k, _)| c * plane + k));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut reduce = vec![T::zero(); self.ell * retained];
        rademacher_fill(&mut rng, &mut reduce, T::lit(1.0 / (self.ell as f64).sqrt()));
        let mut data = vec![T::zero(); self.ell * self.n_f];
        for (r, &feat_idx) in selection.iter().enumerate() {
            let c = feat_idx / plane;
            let k = feat_idx % plane;
            let (u, v) = (k / w, k % w);
            for j in 0..self.ell {
                let p = reduce[j * retained + r];
                let row = &mut data[j * self.n_f + c * plane..][..plane];
                for y in 0..h {
                    let a = p * ch[u * h + y];
                    for x in 0..w {
                        row[y * w + x] += a * cw[v * w + x];
                    }
                }
            }
        }
        let mut m = SketchMatrix::from_rows(self.ell, self.n_f, data)?;
        m.selection = Some(selection);
        Ok(m)
    }
}
