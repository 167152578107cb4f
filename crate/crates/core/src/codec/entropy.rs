//! Run-length / Exp-Golomb coefficient coder.
//!
//! Block syntax, MSB-first:
//!
//! ```text
//! block := mode_flag(1) unit{1 | 16}
//! unit  := ( '1' ue(run) se(level) )* '0'
//! ```
//!
//! `mode_flag` is 0 for `T16` and 1 for `T4`. Units are visited in raster
//! order, coefficients in zigzag order; `run` counts zeros skipped since
//! the previous nonzero level and the trailing `0` bit ends the unit.

use super::dct::scan_units;
use super::quant::MAX_LEVEL;
use super::ModeId;
use crate::error::{Error, Result};
use crate::image::BLOCK_PIXELS;

#[derive(Clone, Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bits: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bit_len(&self) -> u64 {
        self.bits
    }

    pub fn put_bit(&mut self, bit: bool) {
        if self.bits.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.last_mut().expect("byte allocated");
            *last |= 0x80 >> (self.bits % 8);
        }
        self.bits += 1;
    }

    /// Writes the low `n` bits of `v`, most significant first.
    pub fn put_bits(&mut self, v: u64, n: u32) {
        for k in (0..n).rev() {
            self.put_bit((v >> k) & 1 == 1);
        }
    }

    pub fn put_ue(&mut self, v: u32) {
        let x = u64::from(v) + 1;
        let len = 64 - x.leading_zeros();
        self.put_bits(0, len - 1);
        self.put_bits(x, len);
    }

    pub fn put_se(&mut self, v: i32) {
        self.put_ue(se_to_ue(v));
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    limit: u64,
    pos: u64,
}

impl<'a> BitReader<'a> {
    /// Reads at most `limit` bits of `bytes`.
    pub fn new(bytes: &'a [u8], limit: u64) -> Self {
        BitReader {
            bytes,
            limit: limit.min(bytes.len() as u64 * 8),
            pos: 0,
        }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn get_bit(&mut self) -> Result<bool> {
        if self.pos >= self.limit {
            return Err(Error::format("payload", "unexpected end of bits"));
        }
        let b = self.bytes[(self.pos / 8) as usize] & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Ok(b)
    }

    pub fn get_ue(&mut self) -> Result<u32> {
        let mut zeros = 0u32;
        while !self.get_bit()? {
            zeros += 1;
            if zeros > 31 {
                return Err(Error::format("payload", "exp-golomb prefix too long"));
            }
        }
        let mut x = 1u64;
        for _ in 0..zeros {
            x = (x << 1) | u64::from(self.get_bit()?);
        }
        u32::try_from(x - 1).map_err(|_| Error::format("payload", "exp-golomb value overflow"))
    }

    pub fn get_se(&mut self) -> Result<i32> {
        let u = self.get_ue()?;
        Ok(if u % 2 == 1 {
            ((u as i64 + 1) / 2) as i32
        } else {
            -((u / 2) as i64) as i32
        })
    }
}

#[inline]
fn se_to_ue(v: i32) -> u32 {
    if v > 0 {
        (2 * v as i64 - 1) as u32
    } else {
        (-2 * v as i64) as u32
    }
}

/// Bit length of `ue(v)`.
#[inline]
pub fn ue_len(v: u32) -> u64 {
    let x = u64::from(v) + 1;
    2 * u64::from(63 - x.leading_zeros()) + 1
}

#[inline]
pub fn se_len(v: i32) -> u64 {
    ue_len(se_to_ue(v))
}

/// Exact coded size of one block, mode flag included, without writing it.
pub fn block_bits(levels: &[i32], mode: ModeId) -> u64 {
    debug_assert_eq!(levels.len(), BLOCK_PIXELS);
    let mut bits = 1u64;
    for unit in unit_scans(mode) {
        let mut run = 0u32;
        for &k in unit.iter() {
            let l = levels[k];
            if l == 0 {
                run += 1;
            } else {
                bits += 1 + ue_len(run) + se_len(l);
                run = 0;
            }
        }
        bits += 1;
    }
    bits
}

pub fn encode_block(w: &mut BitWriter, levels: &[i32], mode: ModeId) {
    debug_assert_eq!(levels.len(), BLOCK_PIXELS);
    w.put_bit(mode == ModeId::T4);
    for unit in unit_scans(mode) {
        let mut run = 0u32;
        for &k in unit.iter() {
            let l = levels[k];
            if l == 0 {
                run += 1;
            } else {
                w.put_bit(true);
                w.put_ue(run);
                w.put_se(l);
                run = 0;
            }
        }
        w.put_bit(false);
    }
}

/// Reads one block; levels are returned in coefficient layout order.
pub fn decode_block(r: &mut BitReader<'_>) -> Result<(ModeId, [i32; BLOCK_PIXELS])> {
    let mode = if r.get_bit()? { ModeId::T4 } else { ModeId::T16 };
    let mut levels = [0i32; BLOCK_PIXELS];
    for unit in unit_scans(mode) {
        let mut pos = 0usize;
        while r.get_bit()? {
            let run = r.get_ue()? as usize;
            let level = r.get_se()?;
            pos += run;
            if pos >= unit.len() {
                return Err(Error::format("payload", "run past end of transform unit"));
            }
            if level == 0 || level.abs() > MAX_LEVEL {
                return Err(Error::format("payload", format!("invalid level {level}")));
            }
            levels[unit[pos]] = level;
            pos += 1;
        }
    }
    Ok((mode, levels))
}

fn unit_scans(mode: ModeId) -> &'static [Vec<usize>] {
    use std::sync::OnceLock;
    static T16: OnceLock<Vec<Vec<usize>>> = OnceLock::new();
    static T4: OnceLock<Vec<Vec<usize>>> = OnceLock::new();
    match mode {
        ModeId::T16 => T16.get_or_init(|| scan_units(ModeId::T16)),
        ModeId::T4 => T4.get_or_init(|| scan_units(ModeId::T4)),
    }
}
