//! Bitstream container.
//!
//! | offset | size | field                                         |
//! |--------|------|-----------------------------------------------|
//! | 0      | 4    | magic `FPRD`                                  |
//! | 4      | 1    | version (1)                                   |
//! | 5      | 1    | metric tag: 0 SSE, 1 IDSE, 2 FD               |
//! | 6      | 1    | QP                                            |
//! | 7      | 1    | reserved, zero                                |
//! | 8      | 4    | original width (`u32` LE)                     |
//! | 12     | 4    | original height (`u32` LE)                    |
//! | 16     | 4    | padded width (`u32` LE)                       |
//! | 20     | 4    | padded height (`u32` LE)                      |
//! | 24     | 8    | payload length in bits (`u64` LE)             |
//! | 32     | ...  | payload, MSB-first, zero-filled final byte    |
//!
//! The payload is every macroblock in raster order using the block
//! syntax of [`super::entropy`]. Decoding needs nothing but these bytes.

use std::fs;
use std::path::Path;

use super::entropy::{decode_block, BitReader};
use super::{reconstruct_block, to_samples, QuantParams, Transforms};
use crate::error::{Error, Result};
use crate::image::{BlockGrid, ImagePlane};
use crate::scalar::Real;

pub const BITSTREAM_MAGIC: [u8; 4] = *b"FPRD";
pub const BITSTREAM_VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 32;

/// Distortion metric the encoder optimized. Informational only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricTag {
    Sse = 0,
    Idse = 1,
    Fd = 2,
}

impl MetricTag {
    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(MetricTag::Sse),
            1 => Ok(MetricTag::Idse),
            2 => Ok(MetricTag::Fd),
            _ => Err(Error::format("bitstream", format!("unknown metric tag {b}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitstream {
    pub metric: MetricTag,
    pub qp: u8,
    pub orig_width: u32,
    pub orig_height: u32,
    pub width: u32,
    pub height: u32,
    pub payload_bits: u64,
    pub payload: Vec<u8>,
}

impl Bitstream {
    /// Header plus payload bits.
    pub fn total_bits(&self) -> u64 {
        HEADER_BYTES as u64 * 8 + self.payload_bits
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + self.payload.len());
        out.extend_from_slice(&BITSTREAM_MAGIC);
        out.push(BITSTREAM_VERSION);
        out.push(self.metric as u8);
        out.push(self.qp);
        out.push(0);
        for v in [self.orig_width, self.orig_height, self.width, self.height] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.payload_bits.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_BYTES {
            return Err(Error::format("bitstream", "shorter than the header"));
        }
        if bytes[..4] != BITSTREAM_MAGIC {
            return Err(Error::format("bitstream", "bad magic"));
        }
        if bytes[4] != BITSTREAM_VERSION {
            return Err(Error::format("bitstream", format!("unsupported version {}", bytes[4])));
        }
        let metric = MetricTag::from_byte(bytes[5])?;
        let qp = bytes[6];
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let payload_bits = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
        let payload = bytes[HEADER_BYTES..].to_vec();
        if payload.len() as u64 != payload_bits.div_ceil(8) {
            return Err(Error::format(
                "bitstream",
                format!("payload is {} bytes, header announces {payload_bits} bits", payload.len()),
            ));
        }
        Ok(Bitstream {
            metric,
            qp,
            orig_width: u32_at(8),
            orig_height: u32_at(12),
            width: u32_at(16),
            height: u32_at(20),
            payload_bits,
            payload,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Decodes a bitstream with arithmetic in `T`.
///
/// Matches the encoder reconstruction bit for bit when the encoder used the
/// same scalar type.
pub fn decode<T: Real>(bs: &Bitstream) -> Result<ImagePlane> {
    let q = QuantParams::new(i32::from(bs.qp)).map_err(|e| Error::format("bitstream", e.to_string()))?;
    let grid = BlockGrid::new(bs.width as usize, bs.height as usize)
        .map_err(|e| Error::format("bitstream", e.to_string()))?;
    let samples = vec![0u8; grid.width() * grid.height()];
    let mut plane = ImagePlane::from_padded(
        grid.width(),
        grid.height(),
        bs.orig_width as usize,
        bs.orig_height as usize,
        samples,
    )
    .map_err(|e| Error::format("bitstream", e.to_string()))?;
    let transforms = Transforms::<T>::new();
    let mut reader = BitReader::new(&bs.payload, bs.payload_bits);
    for i in 0..grid.n_b() {
        let (mode, levels) = decode_block(&mut reader)?;
        let rec = reconstruct_block(&levels, mode, &q, &transforms);
        plane.put_block(i, &to_samples(&rec))?;
    }
    if reader.position() != bs.payload_bits {
        return Err(Error::format("bitstream", "payload has trailing bits"));
    }
    Ok(plane)
}
