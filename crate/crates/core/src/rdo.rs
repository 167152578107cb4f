//! Per-macroblock mode decision minimizing `D + λ R`.
//!
//! Blocks are independent (no prediction), so every candidate of every
//! block is coded and scored in parallel; the bitstream is assembled in
//! raster order afterwards. Distortions are evaluated on unclamped
//! reconstructions so the quadratic-form identities hold exactly.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::codec::entropy::{encode_block, BitWriter};
use crate::codec::{code_block, to_samples, Bitstream, CodedBlock, MetricTag, ModeId, QuantParams, Transforms};
use crate::error::{Error, Result};
use crate::featnet::{Extent, FeatureExtractor};
use crate::image::{psnr, Block, ImagePlane, BLOCK_PIXELS, BLOCK_SIZE};
use crate::jacobian::{SketchedJacobian, TauPolicy};
use crate::scalar::{dot, norm_sq, Real};
use crate::sketch::SketchParams;

/// Distortion measure used to rank candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    Sse,
    /// Sketched input-dependent squared error plus `tau` times SSE.
    Idse,
    /// Block-wise feature distance with a normalized SSE blend.
    Fd,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Sse, Metric::Idse, Metric::Fd];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Sse => "sse",
            Metric::Idse => "idse",
            Metric::Fd => "fd",
        }
    }

    pub fn tag(&self) -> MetricTag {
        match self {
            Metric::Sse => MetricTag::Sse,
            Metric::Idse => MetricTag::Idse,
            Metric::Fd => MetricTag::Fd,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sse" => Ok(Metric::Sse),
            "idse" => Ok(Metric::Idse),
            "fd" => Ok(Metric::Fd),
            _ => Err(Error::invalid(format!("unknown metric {s:?}"))),
        }
    }
}

/// Rescaling of `λ` for metrics whose distortion is not in SSE units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LambdaNorm {
    None,
    /// IDSE: `λ` times the mean diagonal of `Bᵀ B + tau I`.
    /// FD: `λ (1 + fd_blend) / μ_S`. SSE: unchanged.
    Trace,
}

impl FromStr for LambdaNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(LambdaNorm::None),
            "trace" => Ok(LambdaNorm::Trace),
            _ => Err(Error::invalid(format!("unknown lambda normalization {s:?}"))),
        }
    }
}

impl fmt::Display for LambdaNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LambdaNorm::None => "none",
            LambdaNorm::Trace => "trace",
        })
    }
}

pub const DEFAULT_LAMBDA_C: f64 = 0.85;

#[derive(Clone, Debug, PartialEq)]
pub struct RdoConfig {
    pub metric: Metric,
    pub qp: i32,
    pub c: f64,
    pub tau_policy: TauPolicy,
    /// Multiplies the `tau` the policy produces.
    pub tau_scale: f64,
    pub lambda_norm: LambdaNorm,
    pub sketch: SketchParams,
    pub fd_blend: f64,
    /// Replaces `λ(qp)` before normalization.
    pub lambda_override: Option<f64>,
    /// Restricts the candidate set to one mode.
    pub forced_mode: Option<ModeId>,
}

impl Default for RdoConfig {
    fn default() -> Self {
        RdoConfig {
            metric: Metric::Sse,
            qp: 30,
            c: DEFAULT_LAMBDA_C,
            tau_policy: TauPolicy::MeanFrobenius,
            tau_scale: 1.0,
            lambda_norm: LambdaNorm::Trace,
            sketch: SketchParams::default(),
            fd_blend: 1.0,
            lambda_override: None,
            forced_mode: None,
        }
    }
}

impl RdoConfig {
    pub fn new(metric: Metric, qp: i32) -> Self {
        RdoConfig {
            metric,
            qp,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        QuantParams::new(self.qp)?;
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid("lambda constant c must be positive"));
        }
        if !(self.tau_scale >= 0.0 && self.tau_scale.is_finite()) {
            return Err(Error::invalid("tau scale must be finite and non-negative"));
        }
        if let TauPolicy::Explicit(t) = self.tau_policy {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::invalid("tau must be finite and non-negative"));
            }
        }
        if !(self.fd_blend >= 0.0 && self.fd_blend.is_finite()) {
            return Err(Error::invalid("fd blend must be finite and non-negative"));
        }
        if let Some(l) = self.lambda_override {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::invalid("lambda must be finite and non-negative"));
            }
        }
        if self.sketch.ell == 0 {
            return Err(Error::invalid("sketch dimension must be positive"));
        }
        Ok(())
    }

    fn modes(&self) -> Vec<ModeId> {
        match self.forced_mode {
            Some(m) => vec![m],
            None => ModeId::ALL.to_vec(),
        }
    }
}

/// `λ = c 2^((qp - 12) / 3)`.
pub fn lambda_from_qp(qp: i32, c: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid("lambda constant c must be positive"));
    }
    Ok(c * 2f64.powf(f64::from(qp - 12) / 3.0))
}

/// `‖y - ŷ‖²`.
pub fn distortion_sse<T: Real>(y: &[T], y_hat: &[T]) -> Result<T> {
    if y.len() != y_hat.len() {
        return Err(Error::shape("coefficient vectors differ in length"));
    }
    Ok(y.iter().zip(y_hat).map(|(&a, &b)| (a - b) * (a - b)).sum())
}

/// `‖Btr r‖²` for `Btr` stored as `ell` rows of 256.
pub fn sketched_energy<T: Real>(btr: &[T], residual: &[T]) -> Result<T> {
    if residual.len() != BLOCK_PIXELS || !btr.len().is_multiple_of(BLOCK_PIXELS) {
        return Err(Error::shape("block matrix and residual must have 256 columns"));
    }
    Ok(btr.chunks(BLOCK_PIXELS).map(|row| dot(row, residual).powi(2)).sum())
}

/// `‖Btr (y - ŷ)‖² + tau ‖y - ŷ‖²` where `Btr` is the block sketch in the
/// transform domain of the mode that produced `y`.
pub fn distortion_idse<T: Real>(btr: &[T], y: &[T], y_hat: &[T], tau: T) -> Result<T> {
    if y.len() != y_hat.len() {
        return Err(Error::shape("coefficient vectors differ in length"));
    }
    let r: Vec<T> = y.iter().zip(y_hat).map(|(&a, &b)| a - b).collect();
    Ok(sketched_energy(btr, &r)? + tau * norm_sq(&r))
}

/// `‖f(x_i) - f(x̂_i)‖²` with the extractor run on the 16x16 block alone.
pub fn block_feature_distance<T: Real, E: FeatureExtractor<T>>(net: &E, block: &[T], recon: &[T]) -> Result<T> {
    let e = Extent::new(BLOCK_SIZE, BLOCK_SIZE);
    let a = net.forward(block, e)?;
    let b = net.forward(recon, e)?;
    Ok(a.iter().zip(&b).map(|(&p, &q)| (p - q) * (p - q)).sum())
}

/// `fd / μ_F + blend sse / μ_S`; a vanishing normalizer leaves its term unscaled.
pub fn distortion_fd<T: Real>(fd: T, sse: T, mu_f: T, mu_s: T, blend: T) -> T {
    let nf = if mu_f > T::zero() { mu_f } else { T::one() };
    let ns = if mu_s > T::zero() { mu_s } else { T::one() };
    fd / nf + blend * sse / ns
}

/// Score of one candidate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateCost {
    pub mode: ModeId,
    pub bits: u64,
    pub distortion: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockDecision {
    pub index: usize,
    pub mode: ModeId,
    /// Metric distortion of the chosen candidate.
    pub distortion: f64,
    pub bits: u64,
    /// `distortion + λ bits`.
    pub cost: f64,
    /// Pixel SSE of the chosen candidate, unclamped.
    pub sse: f64,
    /// `‖S J_i (x_i - x̂_i)‖²` when a sketched Jacobian was available.
    pub idse: Option<f64>,
    pub candidates: Vec<CandidateCost>,
}

/// Picks the cheapest candidate; ties go to the earlier entry, i.e. `T16`.
pub fn decide<T: Real>(distortions: &[T], bits: &[u64], lambda: T) -> usize {
    let mut best = 0;
    let mut best_cost = distortions[0] + lambda * T::from_u64(bits[0]).unwrap();
    for k in 1..distortions.len() {
        let c = distortions[k] + lambda * T::from_u64(bits[k]).unwrap();
        if c < best_cost {
            best = k;
            best_cost = c;
        }
    }
    best
}

/// Codes `pixels` with every mode in `modes` and keeps the cheapest under `distortion`.
pub fn decide_block<T: Real, F>(
    index: usize,
    pixels: &[T],
    modes: &[ModeId],
    q: &QuantParams,
    lambda: T,
    transforms: &Transforms<T>,
    distortion: F,
) -> Result<(BlockDecision, CodedBlock<T>)>
where
    F: Fn(&CodedBlock<T>) -> Result<T>,
{
    if modes.is_empty() {
        return Err(Error::invalid("no candidate modes"));
    }
    let mut coded = Vec::with_capacity(modes.len());
    let mut d = Vec::with_capacity(modes.len());
    for &m in modes {
        let cb = code_block(pixels, m, q, transforms)?;
        d.push(distortion(&cb)?);
        coded.push(cb);
    }
    let bits: Vec<u64> = coded.iter().map(|c| c.bits).collect();
    let k = decide(&d, &bits, lambda);
    let candidates = summarize(modes, &d, &bits, lambda);
    let chosen = coded.swap_remove(k);
    let sse = norm_sq(&chosen.coeff_residual()).to_f64_lossy();
    Ok((
        BlockDecision {
            index,
            mode: chosen.mode,
            distortion: candidates[k].distortion,
            bits: chosen.bits,
            cost: candidates[k].cost,
            sse,
            idse: None,
            candidates,
        },
        chosen,
    ))
}

fn summarize<T: Real>(modes: &[ModeId], d: &[T], bits: &[u64], lambda: T) -> Vec<CandidateCost> {
    modes
        .iter()
        .zip(d)
        .zip(bits)
        .map(|((&mode, &dist), &b)| CandidateCost {
            mode,
            bits: b,
            distortion: dist.to_f64_lossy(),
            cost: (dist + lambda * T::from_u64(b).unwrap()).to_f64_lossy(),
        })
        .collect()
}

/// Aggregates of one encode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncodeTotals {
    /// Header plus payload.
    pub bits: u64,
    pub payload_bits: u64,
    pub bpp: f64,
    /// Of the clamped 8-bit reconstruction over the unpadded region.
    pub psnr_db: f64,
    /// Unclamped pixel SSE over the padded area.
    pub sse: f64,
    /// Sum of block-localized sketched IDSE when a Jacobian was available.
    pub idse: Option<f64>,
    /// Sum of the metric distortions of the chosen candidates.
    pub distortion: f64,
    /// Forward passes spent inside the block loop (FD only).
    pub fd_forward_passes: u64,
}

#[derive(Clone, Debug)]
pub struct Encoded {
    pub bitstream: Bitstream,
    pub decisions: Vec<BlockDecision>,
    pub reconstruction: ImagePlane,
    /// `λ` after normalization.
    pub lambda: f64,
    pub tau: Option<f64>,
    /// Pilot-pass normalizers `(μ_F, μ_S)` for FD.
    pub fd_normalizers: Option<(f64, f64)>,
    pub totals: EncodeTotals,
}

impl Encoded {
    pub fn t4_count(&self) -> usize {
        self.decisions.iter().filter(|d| d.mode == ModeId::T4).count()
    }
}

struct Candidate<T> {
    coded: CodedBlock<T>,
    distortion: T,
    idse: Option<T>,
}

/// Encodes `plane` under `config`.
///
/// IDSE needs either a precomputed `jacobian` for this image or `net`, from
/// which one is computed with `config.sketch`. FD needs `net`. SSE ignores
/// both for its decisions but still reports IDSE totals when a `jacobian` is
/// passed.
pub fn encode_image<T: Real, E: FeatureExtractor<T>>(
    plane: &ImagePlane,
    config: &RdoConfig,
    net: Option<&E>,
    jacobian: Option<&SketchedJacobian<T>>,
) -> Result<Encoded> {
    config.validate()?;
    let q = QuantParams::new(config.qp)?;
    let transforms = Transforms::<T>::new();
    let grid = plane.grid();
    let owned;
    let sj = match (config.metric, jacobian) {
        (Metric::Idse, None) => {
            let net = net.ok_or_else(|| Error::invalid("IDSE needs a feature extractor or a sketched Jacobian"))?;
            owned = SketchedJacobian::compute(net, plane, config.sketch, &transforms)?;
            Some(&owned)
        }
        (_, j) => j,
    };
    if let Some(sj) = sj {
        if sj.grid() != &grid {
            return Err(Error::shape("sketched Jacobian was computed for a different block grid"));
        }
    }
    let fd_net = match config.metric {
        Metric::Fd => Some(net.ok_or_else(|| Error::invalid("FD needs a feature extractor"))?),
        _ => None,
    };
    let tau = sj.map(|s| s.compute_tau(config.tau_policy) * T::lit(config.tau_scale));
    let modes = config.modes();
    let n_b = grid.n_b();
    let blocks: Vec<Block<T>> = (0..n_b).map(|i| plane.extract_block(i)).collect::<Result<_>>()?;

    let coded: Vec<Vec<CodedBlock<T>>> = blocks
        .par_iter()
        .map(|b| modes.iter().map(|&m| code_block(b, m, &q, &transforms)).collect())
        .collect::<Result<_>>()?;

    let idse_of = |i: usize, cb: &CodedBlock<T>| -> Result<Option<T>> {
        match sj {
            Some(sj) => Ok(Some(sketched_energy(
                sj.block(i).transform_domain(cb.mode),
                &cb.coeff_residual(),
            )?)),
            None => Ok(None),
        }
    };

    let mut lambda = match config.lambda_override {
        Some(l) => T::lit(l),
        None => T::lit(lambda_from_qp(config.qp, config.c)?),
    };
    let mut fd_normalizers = None;
    let mut fd_forward_passes = 0u64;

    let scored: Vec<Vec<Candidate<T>>> = match config.metric {
        Metric::Sse | Metric::Idse => {
            let scored = coded
                .into_par_iter()
                .enumerate()
                .map(|(i, cands)| {
                    cands
                        .into_iter()
                        .map(|cb| {
                            let sse = norm_sq(&cb.coeff_residual());
                            let idse = idse_of(i, &cb)?;
                            let distortion = match config.metric {
                                Metric::Idse => idse.expect("jacobian present") + tau.expect("jacobian present") * sse,
                                _ => sse,
                            };
                            Ok(Candidate {
                                coded: cb,
                                distortion,
                                idse,
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            if config.metric == Metric::Idse && config.lambda_norm == LambdaNorm::Trace {
                let sj = sj.expect("jacobian present");
                let px = T::from_usize_lossy(BLOCK_PIXELS);
                let mean_frob = sj.blocks().iter().map(|b| b.frob_sq).sum::<T>() / T::from_usize_lossy(n_b);
                lambda *= mean_frob / px + tau.expect("jacobian present");
            }
            scored
        }
        Metric::Fd => {
            let net = fd_net.expect("checked above");
            let e = Extent::new(BLOCK_SIZE, BLOCK_SIZE);
            // pilot pass: raw feature distance and SSE of every candidate
            let raw: Vec<Vec<(CodedBlock<T>, T, T, Option<T>)>> = coded
                .into_par_iter()
                .zip(blocks.par_iter())
                .enumerate()
                .map(|(i, (cands, b))| {
                    let f0 = net.forward(b, e)?;
                    cands
                        .into_iter()
                        .map(|cb| {
                            let rec = cb.reconstruct(&transforms);
                            let f1 = net.forward(&rec, e)?;
                            let fd: T = f0.iter().zip(&f1).map(|(&p, &q)| (p - q) * (p - q)).sum();
                            let sse = norm_sq(&cb.coeff_residual());
                            let idse = idse_of(i, &cb)?;
                            Ok((cb, fd, sse, idse))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?;
            fd_forward_passes = (n_b * (modes.len() + 1)) as u64;
            let count = T::from_usize_lossy(n_b * modes.len());
            let mu_f = raw.iter().flatten().map(|c| c.1).sum::<T>() / count;
            let mu_s = raw.iter().flatten().map(|c| c.2).sum::<T>() / count;
            fd_normalizers = Some((mu_f.to_f64_lossy(), mu_s.to_f64_lossy()));
            let blend = T::lit(config.fd_blend);
            if config.lambda_norm == LambdaNorm::Trace {
                let ns = if mu_s > T::zero() { mu_s } else { T::one() };
                lambda *= (T::one() + blend) / ns;
            }
            raw.into_iter()
                .map(|cands| {
                    cands
                        .into_iter()
                        .map(|(cb, fd, sse, idse)| Candidate {
                            coded: cb,
                            distortion: distortion_fd(fd, sse, mu_f, mu_s, blend),
                            idse,
                        })
                        .collect()
                })
                .collect()
        }
    };

    let chosen: Vec<(BlockDecision, Candidate<T>)> = scored
        .into_par_iter()
        .enumerate()
        .map(|(i, mut cands)| {
            let d: Vec<T> = cands.iter().map(|c| c.distortion).collect();
            let bits: Vec<u64> = cands.iter().map(|c| c.coded.bits).collect();
            let k = decide(&d, &bits, lambda);
            let candidates = summarize(&modes, &d, &bits, lambda);
            let c = cands.swap_remove(k);
            let decision = BlockDecision {
                index: i,
                mode: c.coded.mode,
                distortion: candidates[k].distortion,
                bits: c.coded.bits,
                cost: candidates[k].cost,
                sse: norm_sq(&c.coded.coeff_residual()).to_f64_lossy(),
                idse: c.idse.map(|v| v.to_f64_lossy()),
                candidates,
            };
            (decision, c)
        })
        .collect();

    let mut writer = BitWriter::new();
    let mut recon = ImagePlane::filled(plane.orig_width(), plane.orig_height(), 0)?;
    for (d, c) in &chosen {
        encode_block(&mut writer, &c.coded.levels, c.coded.mode);
        recon.put_block(d.index, &to_samples(&c.coded.reconstruct(&transforms)))?;
    }
    let payload_bits = writer.bit_len();
    let bitstream = Bitstream {
        metric: config.metric.tag(),
        qp: config.qp as u8,
        orig_width: plane.orig_width() as u32,
        orig_height: plane.orig_height() as u32,
        width: plane.width() as u32,
        height: plane.height() as u32,
        payload_bits,
        payload: writer.into_bytes(),
    };
    debug_assert_eq!(payload_bits, chosen.iter().map(|(d, _)| d.bits).sum::<u64>());
    let decisions: Vec<BlockDecision> = chosen.into_iter().map(|(d, _)| d).collect();
    let bits = bitstream.total_bits();
    let totals = EncodeTotals {
        bits,
        payload_bits,
        bpp: bits as f64 / (plane.orig_width() * plane.orig_height()) as f64,
        psnr_db: psnr(plane, &recon)?,
        sse: decisions.iter().map(|d| d.sse).sum(),
        idse: sj.map(|_| decisions.iter().map(|d| d.idse.unwrap_or(0.0)).sum()),
        distortion: decisions.iter().map(|d| d.distortion).sum(),
        fd_forward_passes,
    };
    Ok(Encoded {
        bitstream,
        decisions,
        reconstruction: recon,
        lambda: lambda.to_f64_lossy(),
        tau: tau.map(|t| t.to_f64_lossy()),
        fd_normalizers,
        totals,
    })
}
