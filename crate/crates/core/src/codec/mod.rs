//! A simplified intra codec: fixed mid-gray offset, per-macroblock choice
//! between one 16x16 DCT and sixteen 4x4 DCTs, uniform quantization and a
//! run-length / Exp-Golomb coefficient coder.

pub mod bitstream;
pub mod dct;
pub mod entropy;
pub mod quant;

use std::fmt;
use std::str::FromStr;

pub use bitstream::{decode, Bitstream, MetricTag, BITSTREAM_MAGIC, BITSTREAM_VERSION, HEADER_BYTES};
pub use dct::{dct_forward, dct_inverse, Transforms};
pub use quant::QuantParams;

use crate::error::{Error, Result};
use crate::image::{Block, BLOCK_PIXELS};
use crate::scalar::Real;

/// Offset subtracted before the forward transform and restored on reconstruction.
pub const DC_OFFSET: f64 = 128.0;

/// Transform partition of a macroblock.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModeId {
    /// A single 16x16 transform.
    T16,
    /// Sixteen 4x4 transforms.
    T4,
}

impl ModeId {
    pub const ALL: [ModeId; 2] = [ModeId::T16, ModeId::T4];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModeId::T16 => "T16",
            ModeId::T4 => "T4",
        }
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "T16" => Ok(ModeId::T16),
            "T4" => Ok(ModeId::T4),
            _ => Err(Error::invalid(format!("unknown mode {s:?}"))),
        }
    }
}

/// One macroblock coded with one candidate mode.
#[derive(Clone, Debug)]
pub struct CodedBlock<T> {
    pub mode: ModeId,
    /// Quantized levels in coefficient layout order (see [`dct`]).
    pub levels: [i32; BLOCK_PIXELS],
    /// Exact coded size in bits, mode flag included.
    pub bits: u64,
    /// Original transform coefficients `y`.
    pub coeffs: Block<T>,
    /// Dequantized coefficients `ŷ`.
    pub recon_coeffs: Block<T>,
}

impl<T: Real> CodedBlock<T> {
    /// `y - ŷ` in the transform domain.
    pub fn coeff_residual(&self) -> Block<T> {
        let mut r = [T::zero(); BLOCK_PIXELS];
        for ((o, &y), &yh) in r.iter_mut().zip(&self.coeffs).zip(&self.recon_coeffs) {
            *o = y - yh;
        }
        r
    }

    /// Unclamped reconstruction in pixel units.
    pub fn reconstruct(&self, transforms: &Transforms<T>) -> Block<T> {
        reconstruct_coeffs(&self.recon_coeffs, self.mode, transforms)
    }
}

/// Transforms, quantizes and sizes one block.
pub fn code_block<T: Real>(
    pixels: &[T],
    mode: ModeId,
    q: &QuantParams,
    transforms: &Transforms<T>,
) -> Result<CodedBlock<T>> {
    if pixels.len() != BLOCK_PIXELS {
        return Err(Error::shape("a macroblock has 256 pixels"));
    }
    let offset = T::lit(DC_OFFSET);
    let mut centered = [T::zero(); BLOCK_PIXELS];
    for (c, &p) in centered.iter_mut().zip(pixels) {
        *c = p - offset;
    }
    let coeffs = transforms.forward(&centered, mode);
    let mut levels = [0i32; BLOCK_PIXELS];
    q.quantize(&coeffs, &mut levels)?;
    let mut recon_coeffs = [T::zero(); BLOCK_PIXELS];
    q.dequantize(&levels, &mut recon_coeffs);
    let bits = entropy::block_bits(&levels, mode);
    Ok(CodedBlock {
        mode,
        levels,
        bits,
        coeffs,
        recon_coeffs,
    })
}

fn reconstruct_coeffs<T: Real>(recon_coeffs: &[T], mode: ModeId, transforms: &Transforms<T>) -> Block<T> {
    let mut px = transforms.inverse(recon_coeffs, mode);
    let offset = T::lit(DC_OFFSET);
    for p in px.iter_mut() {
        *p += offset;
    }
    px
}

/// Dequantize, inverse transform and restore the offset. Not clamped.
pub fn reconstruct_block<T: Real>(
    levels: &[i32],
    mode: ModeId,
    q: &QuantParams,
    transforms: &Transforms<T>,
) -> Block<T> {
    let mut c = [T::zero(); BLOCK_PIXELS];
    q.dequantize(levels, &mut c);
    reconstruct_coeffs(&c, mode, transforms)
}

/// Rounds and clamps a real-valued block to 8-bit samples.
pub fn to_samples<T: Real>(block: &[T]) -> [u8; BLOCK_PIXELS] {
    let mut out = [0u8; BLOCK_PIXELS];
    let hi = T::lit(255.0);
    for (o, &v) in out.iter_mut().zip(block) {
        let r = v.round().max(T::zero()).min(hi);
        *o = r.to_f64_lossy() as u8;
    }
    out
}
