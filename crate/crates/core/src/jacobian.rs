//! Sketched Jacobian `S J_f(x)` of a feature extractor, computed once per
//! image and sliced into per-macroblock matrices.
//!
//! Row `j` of the full sketch is one reverse pass with cotangent `s_j`, so
//! the whole matrix costs one forward pass and `ell` backward passes no
//! matter how many coding candidates are later evaluated. Each block keeps
//! its pixel-domain slice `Bpix` (`ell x 256`) and, for both partition
//! modes, the transform-domain version `Btr = Bpix D` so that block
//! distortions can be evaluated directly on quantized coefficients.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::codec::{ModeId, Transforms};
use crate::error::{Error, Result};
use crate::featnet::{Extent, FeatureExtractor, FeatureShape, Linearization};
use crate::image::{BlockGrid, ImagePlane, BLOCK_PIXELS};
use crate::scalar::{norm_sq, Real};
use crate::sketch::{SketchKind, SketchMatrix, SketchParams, GENERATOR_ID};

/// `S J_f(x)` over the whole padded image, `ell x n_p` row-major.
#[derive(Clone, Debug)]
pub struct FullSketch<T> {
    pub ell: usize,
    pub extent: Extent,
    pub rows: Vec<T>,
    pub features: Vec<T>,
    pub feature_shape: FeatureShape,
    pub sketch: SketchMatrix<T>,
}

impl<T: Real> FullSketch<T> {
    pub fn row(&self, j: usize) -> &[T] {
        &self.rows[j * self.extent.pixels()..][..self.extent.pixels()]
    }

    /// `S J e` for a pixel-indexed perturbation `e`.
    pub fn apply(&self, e: &[T]) -> Result<Vec<T>> {
        if e.len() != self.extent.pixels() {
            return Err(Error::shape("perturbation length differs from pixel count"));
        }
        Ok((0..self.ell).map(|j| crate::scalar::dot(self.row(j), e)).collect())
    }
}

/// Rows `s_jᵀ J` for every row of `sketch`, evaluated in parallel.
pub fn sketch_rows<T: Real, L: Linearization<T>>(tape: &L, sketch: &SketchMatrix<T>) -> Result<Vec<T>> {
    if sketch.cols() != tape.feature_shape().len() {
        return Err(Error::shape(format!(
            "sketch has {} columns, extractor produces {} features",
            sketch.cols(),
            tape.feature_shape().len()
        )));
    }
    let rows: Vec<Vec<T>> = (0..sketch.rows())
        .into_par_iter()
        .map(|j| tape.vjp(sketch.row(j)))
        .collect::<Result<_>>()?;
    Ok(rows.concat())
}

/// Linearizes `net` at `input` and contracts its Jacobian with `sketch`.
pub fn sketch_with<T: Real, E: FeatureExtractor<T>>(
    net: &E,
    input: &[T],
    extent: Extent,
    sketch: SketchMatrix<T>,
) -> Result<FullSketch<T>> {
    let tape = net.linearize(input, extent)?;
    let rows = sketch_rows(&tape, &sketch)?;
    Ok(FullSketch {
        ell: sketch.rows(),
        extent,
        rows,
        features: tape.output().to_vec(),
        feature_shape: tape.feature_shape(),
        sketch,
    })
}

/// Sketched Jacobian of `net` at the whole padded `plane`.
pub fn compute_sketched_jacobian<T: Real, E: FeatureExtractor<T>>(
    net: &E,
    plane: &ImagePlane,
    params: SketchParams,
) -> Result<FullSketch<T>> {
    let extent = Extent::new(plane.height(), plane.width());
    let input = plane.to_real::<T>();
    let tape = net.linearize(&input, extent)?;
    let shape = tape.feature_shape();
    let sketch = params.with_dim(shape.len()).materialize_for(shape, tape.output())?;
    let rows = sketch_rows(&tape, &sketch)?;
    Ok(FullSketch {
        ell: sketch.rows(),
        extent,
        rows,
        features: tape.output().to_vec(),
        feature_shape: shape,
        sketch,
    })
}

/// Columns of `full` belonging to each block, `ell x 256` in block pixel order.
pub fn localize<T: Real>(full: &FullSketch<T>, grid: &BlockGrid) -> Result<Vec<Vec<T>>> {
    if grid.width() != full.extent.width || grid.height() != full.extent.height {
        return Err(Error::shape("block grid does not match the sketched image"));
    }
    (0..grid.n_b())
        .into_par_iter()
        .map(|i| {
            let cols: Vec<usize> = grid.pixel_indices(i)?.collect();
            let mut b = vec![T::zero(); full.ell * BLOCK_PIXELS];
            for j in 0..full.ell {
                let row = full.row(j);
                for (k, &p) in cols.iter().enumerate() {
                    b[j * BLOCK_PIXELS + k] = row[p];
                }
            }
            Ok(b)
        })
        .collect()
}

/// `Bpix D_m`: each row is reshaped to 16x16 and forward transformed.
pub fn to_transform_domain<T: Real>(bpix: &[T], mode: ModeId, transforms: &Transforms<T>) -> Result<Vec<T>> {
    if bpix.is_empty() || !bpix.len().is_multiple_of(BLOCK_PIXELS) {
        return Err(Error::shape("block sketch rows must have 256 columns"));
    }
    let mut out = Vec::with_capacity(bpix.len());
    for row in bpix.chunks(BLOCK_PIXELS) {
        out.extend_from_slice(&transforms.forward(row, mode));
    }
    Ok(out)
}

/// Global versus block-localized sketched IDSE of one residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalizationReport {
    /// `‖S J e‖²`.
    pub global: f64,
    /// `Σ_i ‖S J_i e_i‖²`, dropping every cross-block term.
    pub localized: f64,
}

impl LocalizationReport {
    /// `|localized - global| / global`, or 0 when both vanish.
    pub fn relative_error(&self) -> f64 {
        if self.global == 0.0 {
            if self.localized == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.localized - self.global).abs() / self.global
        }
    }
}

/// Measures how much the block-diagonal approximation changes the IDSE of `residual`.
pub fn localization_error<T: Real>(full: &FullSketch<T>, grid: &BlockGrid, residual: &[T]) -> Result<LocalizationReport> {
    let global = norm_sq(&full.apply(residual)?).to_f64_lossy();
    let blocks = localize(full, grid)?;
    let mut localized = 0.0;
    for (i, b) in blocks.iter().enumerate() {
        let e: Vec<T> = grid.pixel_indices(i)?.map(|p| residual[p]).collect();
        for row in b.chunks(BLOCK_PIXELS) {
            localized += crate::scalar::dot(row, &e).to_f64_lossy().powi(2);
        }
    }
    Ok(LocalizationReport { global, localized })
}

/// How the Tikhonov weight `tau` is derived from the block sketches.
#[derive(Clone, Copy, Debug, PartialEq)]
#[derive(Default)]
pub enum TauPolicy {
    /// Mean over blocks of `‖S J_i‖_F`.
    #[default]
    MeanFrobenius,
    /// `sqrt(mean ‖S J_i‖_F²)`.
    RmsFrobenius,
    /// Mean diagonal entry of `J_iᵀ Sᵀ S J_i`, i.e. `mean ‖S J_i‖_F² / 256`.
    MeanDiagonal,
    Explicit(f64),
}


impl FromStr for TauPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" | "mean-frobenius" | "default" => Ok(TauPolicy::MeanFrobenius),
            "rms" | "rms-frobenius" => Ok(TauPolicy::RmsFrobenius),
            "diag" | "mean-diagonal" => Ok(TauPolicy::MeanDiagonal),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|v| *v >= 0.0 && v.is_finite())
                .map(TauPolicy::Explicit)
                .ok_or_else(|| Error::invalid(format!("unknown tau policy {s:?}"))),
        }
    }
}

impl fmt::Display for TauPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauPolicy::MeanFrobenius => f.write_str("mean-frobenius"),
            TauPolicy::RmsFrobenius => f.write_str("rms-frobenius"),
            TauPolicy::MeanDiagonal => f.write_str("mean-diagonal"),
            TauPolicy::Explicit(v) => write!(f, "{v}"),
        }
    }
}

/// Per-block matrices of one image.
#[derive(Clone, Debug)]
pub struct BlockSketch<T> {
    pub pix: Vec<T>,
    pub t16: Vec<T>,
    pub t4: Vec<T>,
    pub frob_sq: T,
}

impl<T: Real> BlockSketch<T> {
    pub fn transform_domain(&self, mode: ModeId) -> &[T] {
        match mode {
            ModeId::T16 => &self.t16,
            ModeId::T4 => &self.t4,
        }
    }
}

/// The localized, transform-domain sketched Jacobian used during RDO.
#[derive(Clone, Debug)]
pub struct SketchedJacobian<T> {
    ell: usize,
    grid: BlockGrid,
    blocks: Vec<BlockSketch<T>>,
    tau: T,
    params: Option<SketchParams>,
}

impl<T: Real> SketchedJacobian<T> {
    pub fn from_full(full: &FullSketch<T>, grid: BlockGrid, transforms: &Transforms<T>) -> Result<Self> {
        let pix = localize(full, &grid)?;
        let blocks: Vec<BlockSketch<T>> = pix
            .into_par_iter()
            .map(|p| {
                Ok(BlockSketch {
                    t16: to_transform_domain(&p, ModeId::T16, transforms)?,
                    t4: to_transform_domain(&p, ModeId::T4, transforms)?,
                    frob_sq: norm_sq(&p),
                    pix: p,
                })
            })
            .collect::<Result<_>>()?;
        let mut sj = SketchedJacobian {
            ell: full.ell,
            grid,
            blocks,
            tau: T::zero(),
            params: None,
        };
        sj.tau = sj.compute_tau(TauPolicy::default());
        Ok(sj)
    }

    /// Full pipeline for an image: linearize, sketch, localize, transform.
    pub fn compute<E: FeatureExtractor<T>>(
        net: &E,
        plane: &ImagePlane,
        params: SketchParams,
        transforms: &Transforms<T>,
    ) -> Result<Self> {
        let full = compute_sketched_jacobian(net, plane, params)?;
        let mut sj = Self::from_full(&full, plane.grid(), transforms)?;
        sj.params = Some(params);
        Ok(sj)
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn grid(&self) -> &BlockGrid {
        &self.grid
    }

    pub fn n_b(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, i: usize) -> &BlockSketch<T> {
        &self.blocks[i]
    }

    pub fn blocks(&self) -> &[BlockSketch<T>] {
        &self.blocks
    }

    pub fn params(&self) -> Option<SketchParams> {
        self.params
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn set_tau(&mut self, tau: T) {
        self.tau = tau;
    }

    pub fn frob_sq(&self, i: usize) -> T {
        self.blocks[i].frob_sq
    }

    pub fn compute_tau(&self, policy: TauPolicy) -> T {
        let n = T::from_usize_lossy(self.blocks.len().max(1));
        match policy {
            TauPolicy::MeanFrobenius => self.blocks.iter().map(|b| b.frob_sq.sqrt()).sum::<T>() / n,
            TauPolicy::RmsFrobenius => (self.blocks.iter().map(|b| b.frob_sq).sum::<T>() / n).sqrt(),
            TauPolicy::MeanDiagonal => {
                self.blocks.iter().map(|b| b.frob_sq).sum::<T>() / (n * T::from_usize_lossy(BLOCK_PIXELS))
            }
            TauPolicy::Explicit(v) => T::lit(v),
        }
    }

    /// Mean diagonal of `Bᵀ B + tau I` over all pixels:
    /// `(1 / (256 n_b)) Σ_i (‖B_i‖_F² + 256 tau)`.
    pub fn mean_weight(&self) -> T {
        let px = T::from_usize_lossy(BLOCK_PIXELS);
        let n = T::from_usize_lossy(self.blocks.len().max(1));
        self.blocks.iter().map(|b| b.frob_sq + px * self.tau).sum::<T>() / (px * n)
    }

    /// Squared column norms of the sketch, i.e. `diag(Jᵀ Sᵀ S J)`, as a plane.
    pub fn importance_map(&self) -> ImportanceMap<T> {
        let (w, h) = (self.grid.width(), self.grid.height());
        let mut values = vec![T::zero(); w * h];
        for (i, b) in self.blocks.iter().enumerate() {
            for (k, p) in self.grid.pixel_indices(i).expect("block in grid").enumerate() {
                values[p] = (0..self.ell).map(|j| b.pix[j * BLOCK_PIXELS + k].powi(2)).sum();
            }
        }
        ImportanceMap {
            width: w,
            height: h,
            values,
        }
    }

    /// Little-endian binary dump of every block matrix.
    ///
    /// | field            | type                        |
    /// |------------------|-----------------------------|
    /// | magic `FPSJ`     | 4 bytes                     |
    /// | version (1)      | `u16`                       |
    /// | reserved         | `u16`                       |
    /// | ell, n_b         | `u32`, `u32`                |
    /// | grid cols, rows  | `u32`, `u32`                |
    /// | sketch kind      | `u8` (0 rad, 1 gauss, 2 dct, 255 other) |
    /// | seed             | `u64`                       |
    /// | tau              | `f64`                       |
    /// | generator id     | `u16` length + UTF-8 bytes  |
    /// | per block        | `Bpix`, `Btr(T16)`, `Btr(T4)`, each `ell * 256` `f64` row-major |
    pub fn sidecar_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"FPSJ");
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        for v in [self.ell, self.n_b(), self.grid.cols(), self.grid.rows()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        let (kind, seed) = match self.params {
            Some(p) => (
                match p.kind {
                    SketchKind::Rademacher => 0u8,
                    SketchKind::Gaussian => 1,
                    SketchKind::DctTop16 => 2,
                },
                p.seed,
            ),
            None => (255, 0),
        };
        out.push(kind);
        out.extend_from_slice(&seed.to_le_bytes());
        out.extend_from_slice(&self.tau.to_f64_lossy().to_le_bytes());
        out.extend_from_slice(&(GENERATOR_ID.len() as u16).to_le_bytes());
        out.extend_from_slice(GENERATOR_ID.as_bytes());
        for b in &self.blocks {
            for v in b.pix.iter().chain(&b.t16).chain(&b.t4) {
                out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
            }
        }
        out
    }

    pub fn write_sidecar(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.sidecar_bytes())?;
        Ok(())
    }
}

/// Per-pixel importance `diag(Jᵀ Sᵀ S J)` on the padded grid.
#[derive(Clone, Debug)]
pub struct ImportanceMap<T> {
    pub width: usize,
    pub height: usize,
    pub values: Vec<T>,
}

impl<T: Real> ImportanceMap<T> {
    /// Scales the map so its maximum becomes 255. An all-zero map stays zero.
    pub fn to_plane(&self, orig_width: usize, orig_height: usize) -> Result<ImagePlane> {
        let max = self.values.iter().fold(T::zero(), |m, &v| m.max(v));
        let samples: Vec<u8> = self
            .values
            .iter()
            .map(|&v| {
                if max > T::zero() {
                    (v / max * T::lit(255.0)).round().to_f64_lossy().clamp(0.0, 255.0) as u8
                } else {
                    0
                }
            })
            .collect();
        ImagePlane::from_padded(self.width, self.height, orig_width, orig_height, samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featnet::{Activation, DenseLinear, FeatNet, FeatNetSpec, FeatNetWeights};
    use crate::sketch::SketchSpec;

    fn noise_plane(w: usize, h: usize, seed: u64) -> ImagePlane {
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let data: Vec<u8> = (0..w * h)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s >> 56) as u8
            })
            .collect();
        ImagePlane::from_samples(w, h, &data).unwrap()
    }

    #[test]
    fn linear_identity_sketch_recovers_rows() {
        let e = Extent::new(16, 16);
        let m: Vec<f64> = (0..5 * 256).map(|k| ((k * 31) % 17) as f64 - 8.0).collect();
        let f = DenseLinear::new(e, 5, m.clone()).unwrap();
        let x = noise_plane(16, 16, 1).to_real();
        let full = sketch_with(&f, &x, e, SketchMatrix::identity(5)).unwrap();
        assert_eq!(full.rows, m);
        let grid = BlockGrid::new(16, 16).unwrap();
        let blocks = localize(&full, &grid).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0], full.rows);
    }

    #[test]
    fn zero_net_gives_zero_sketch_and_tau() {
        let spec = FeatNetSpec::default();
        let net = FeatNet::new(spec.clone(), FeatNetWeights::<f64>::zeros(&spec)).unwrap();
        let plane = noise_plane(32, 32, 2);
        let sj = SketchedJacobian::compute(&net, &plane, SketchParams::default(), &Transforms::new()).unwrap();
        assert!(sj.blocks().iter().all(|b| b.pix.iter().all(|&v| v == 0.0)));
        assert_eq!(sj.compute_tau(TauPolicy::MeanFrobenius), 0.0);
        let map = sj.importance_map();
        assert!(map.values.iter().all(|&v| v == 0.0));
        assert!(map.to_plane(32, 32).unwrap().samples().iter().all(|&v| v == 0));
    }

    #[test]
    fn vjp_count_is_ell() {
        let net = FeatNet::<f64>::init_random(FeatNetSpec::default(), 3).unwrap();
        let plane = noise_plane(64, 48, 3);
        let before = net.op_counts();
        SketchedJacobian::compute(&net, &plane, SketchParams::new(SketchKind::Gaussian, 6, 1), &Transforms::new())
            .unwrap();
        let d = net.op_counts().since(&before);
        assert_eq!(d.forward_passes, 1);
        assert_eq!(d.backward_passes, 6);
    }

    #[test]
    fn transform_rows_keep_norm_and_match_dense() {
        let t = Transforms::<f64>::new();
        let mut row = vec![0.0; 256];
        row.iter_mut().enumerate().for_each(|(k, v)| *v = ((k * 7) % 13) as f64 - 6.0);
        let flat = vec![2.5; 256];
        let tflat = to_transform_domain(&flat, ModeId::T16, &t).unwrap();
        assert!((tflat[0] - 40.0).abs() < 1e-12);
        assert!(tflat[1..].iter().all(|v| v.abs() < 1e-12));
        for mode in ModeId::ALL {
            let b = to_transform_domain(&row, mode, &t).unwrap();
            assert!((norm_sq(&b) - norm_sq(&row)).abs() <= 1e-12 * norm_sq(&row));
            // dense D: column k of D is the inverse transform of unit vector e_k
            for k in (0..256).step_by(17) {
                let mut ek = [0.0; 256];
                ek[k] = 1.0;
                let dk = t.inverse(&ek, mode);
                let oracle: f64 = row.iter().zip(dk.iter()).map(|(a, b)| a * b).sum();
                assert!((b[k] - oracle).abs() < 1e-12 * 256.0);
            }
        }
        assert!(to_transform_domain(&row[..100], ModeId::T4, &t).is_err());
    }

    #[test]
    fn tau_policies_match_direct_loops() {
        let net = FeatNet::<f64>::init_random(FeatNetSpec::softplus(&[4, 8]), 5).unwrap();
        let plane = noise_plane(48, 32, 5);
        let sj = SketchedJacobian::compute(&net, &plane, SketchParams::default(), &Transforms::new()).unwrap();
        let norms: Vec<f64> = sj.blocks().iter().map(|b| b.pix.iter().map(|v| v * v).sum::<f64>()).collect();
        let mean = norms.iter().map(|v| v.sqrt()).sum::<f64>() / norms.len() as f64;
        assert!((sj.compute_tau(TauPolicy::MeanFrobenius) - mean).abs() <= 1e-12 * mean);
        assert_eq!(sj.tau(), sj.compute_tau(TauPolicy::MeanFrobenius));
        let rms = (norms.iter().sum::<f64>() / norms.len() as f64).sqrt();
        assert!((sj.compute_tau(TauPolicy::RmsFrobenius) - rms).abs() <= 1e-12 * rms);
        assert_eq!(sj.compute_tau(TauPolicy::Explicit(2.5)), 2.5);

        let e = Extent::new(16, 16);
        let mut m = vec![0.0f64; 256];
        m[3] = 1.0;
        let unit = DenseLinear::new(e, 1, m).unwrap();
        let one = SketchedJacobian::compute(
            &unit,
            &noise_plane(16, 16, 1),
            SketchParams::new(SketchKind::Rademacher, 1, 0),
            &Transforms::new(),
        )
        .unwrap();
        assert!((one.compute_tau(TauPolicy::MeanFrobenius) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn importance_matches_gram_diagonal() {
        let net = FeatNet::<f64>::init_random(FeatNetSpec::default(), 8).unwrap();
        let plane = noise_plane(32, 32, 8);
        let full = compute_sketched_jacobian(&net, &plane, SketchParams::default()).unwrap();
        let sj = SketchedJacobian::from_full(&full, plane.grid(), &Transforms::new()).unwrap();
        let map = sj.importance_map();
        for p in 0..1024 {
            let d: f64 = (0..full.ell).map(|j| full.row(j)[p] * full.row(j)[p]).sum();
            assert!((map.values[p] - d).abs() <= 1e-9 * d.max(1e-300));
        }

        let e = Extent::new(16, 16);
        let sel = DenseLinear::<f64>::selector(e, &[0]).unwrap();
        let sj = SketchedJacobian::compute(
            &sel,
            &noise_plane(16, 16, 2),
            SketchParams::new(SketchKind::Gaussian, 1, 4),
            &Transforms::new(),
        )
        .unwrap();
        let m = sj.importance_map();
        assert!(m.values[0] > 0.0);
        assert!(m.values[1..].iter().all(|&v| v == 0.0));
        let pgm = m.to_plane(16, 16).unwrap();
        assert_eq!(pgm.samples()[0], 255);
    }

    #[test]
    fn block_supported_localization_is_exact() {
        let net = FeatNet::<f64>::init_random(FeatNetSpec::default(), 12).unwrap();
        let plane = noise_plane(48, 32, 12);
        let grid = plane.grid();
        let full = compute_sketched_jacobian(&net, &plane, SketchParams::new(SketchKind::Rademacher, 4, 2)).unwrap();
        let blocks = localize(&full, &grid).unwrap();
        let target = 4;
        let mut e = vec![0.0; full.extent.pixels()];
        let mut local = vec![0.0; 256];
        for (k, p) in grid.pixel_indices(target).unwrap().enumerate() {
            let v = ((k * 13) % 7) as f64 - 3.0;
            e[p] = v;
            local[k] = v;
        }
        let global = norm_sq(&full.apply(&e).unwrap());
        let b = &blocks[target];
        let localized: f64 = (0..4)
            .map(|j| crate::scalar::dot(&b[j * 256..(j + 1) * 256], &local).powi(2))
            .sum();
        assert!((global - localized).abs() <= 1e-12 * global);
    }

    #[test]
    fn localization_report_is_exact_for_one_block_and_measured_otherwise() {
        let net = FeatNet::<f64>::init_random(FeatNetSpec::default(), 21).unwrap();
        let plane = noise_plane(48, 48, 21);
        let grid = plane.grid();
        let full = compute_sketched_jacobian(&net, &plane, SketchParams::new(SketchKind::Gaussian, 8, 3)).unwrap();
        let mut e = vec![0.0; full.extent.pixels()];
        for p in grid.pixel_indices(4).unwrap() {
            e[p] = (p % 5) as f64 - 2.0;
        }
        let one = localization_error(&full, &grid, &e).unwrap();
        assert!(one.relative_error() < 1e-12);
        let spread: Vec<f64> = (0..e.len()).map(|p| ((p * 7) % 11) as f64 - 5.0).collect();
        let r = localization_error(&full, &grid, &spread).unwrap();
        assert!(r.global > 0.0 && r.localized > 0.0 && r.relative_error().is_finite());
    }

    #[test]
    fn sketch_size_validation() {
        let net = FeatNet::<f64>::init_random(FeatNetSpec::stack(&[1], Activation::Relu), 1).unwrap();
        let plane = noise_plane(16, 16, 1);
        // 1 channel x 8 x 8 features
        assert!(compute_sketched_jacobian(&net, &plane, SketchParams::new(SketchKind::Rademacher, 65, 0)).is_err());
        let bad = SketchSpec::new(SketchKind::Rademacher, 2, 0, 10).materialize::<f64>().unwrap();
        let x = plane.to_real::<f64>();
        assert!(sketch_with(&net, &x, Extent::new(16, 16), bad).is_err());
    }

    #[test]
    fn tau_policy_parsing() {
        assert_eq!("default".parse::<TauPolicy>().unwrap(), TauPolicy::MeanFrobenius);
        assert_eq!("rms".parse::<TauPolicy>().unwrap(), TauPolicy::RmsFrobenius);
        assert_eq!("0.5".parse::<TauPolicy>().unwrap(), TauPolicy::Explicit(0.5));
        assert!("-1".parse::<TauPolicy>().is_err());
    }
}
