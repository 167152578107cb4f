//! Binary weight file.
//!
//! All integers and floats are little-endian.
//!
//! | offset | size | field                                    |
//! |--------|------|------------------------------------------|
//! | 0      | 4    | magic `FPNW`                             |
//! | 4      | 2    | version (`u16`, currently 1)             |
//! | 6      | 2    | reserved, zero                           |
//! | 8      | 8    | input scale (`f64`)                      |
//! | 16     | 8    | input offset (`f64`)                     |
//! | 24     | 4    | layer count `L` (`u32`)                  |
//! | 28     | ...  | `L` layer descriptors                    |
//! | ...    | ...  | per conv layer: kernel then bias (`f32`) |
//!
//! A layer descriptor is a tag byte followed by its parameters:
//! `0` conv (`in_ch: u32`, `out_ch: u32`), `1` ReLU, `2` Softplus
//! (`beta: f64`), `3` 2x2 average pool. Kernels are stored
//! `out_ch x in_ch x 3 x 3` row-major, followed by `out_ch` biases.

use std::fs;
use std::path::Path;

use super::{ConvWeights, FeatNet, FeatNetSpec, FeatNetWeights, Layer};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"FPNW";
pub const WEIGHTS_VERSION: u16 = 1;

const TAG_CONV: u8 = 0;
const TAG_RELU: u8 = 1;
const TAG_SOFTPLUS: u8 = 2;
const TAG_POOL: u8 = 3;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::format("weight file", format!("truncated at byte {}", self.pos)))?;
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl<T: Real> FeatNet<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let spec = self.spec();
        let mut out = Vec::new();
        out.extend_from_slice(&WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&spec.input_scale.to_le_bytes());
        out.extend_from_slice(&spec.input_offset.to_le_bytes());
        out.extend_from_slice(&(spec.layers.len() as u32).to_le_bytes());
        for layer in &spec.layers {
            match *layer {
                Layer::Conv { in_ch, out_ch } => {
                    out.push(TAG_CONV);
                    out.extend_from_slice(&(in_ch as u32).to_le_bytes());
                    out.extend_from_slice(&(out_ch as u32).to_le_bytes());
                }
                Layer::Relu => out.push(TAG_RELU),
                Layer::Softplus { beta } => {
                    out.push(TAG_SOFTPLUS);
                    out.extend_from_slice(&beta.to_le_bytes());
                }
                Layer::AvgPool => out.push(TAG_POOL),
            }
        }
        for conv in &self.weights().convs {
            for v in conv.kernel.iter().chain(&conv.bias) {
                out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != WEIGHTS_MAGIC {
            return Err(Error::format("weight file", "bad magic"));
        }
        let version = r.u16()?;
        if version != WEIGHTS_VERSION {
            return Err(Error::format("weight file", format!("unsupported version {version}")));
        }
        r.u16()?;
        let input_scale = r.f64()?;
        let input_offset = r.f64()?;
        let count = r.u32()? as usize;
        if count > 1 << 16 {
            return Err(Error::format("weight file", "implausible layer count"));
        }
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            layers.push(match r.u8()? {
                TAG_CONV => Layer::Conv {
                    in_ch: r.u32()? as usize,
                    out_ch: r.u32()? as usize,
                },
                TAG_RELU => Layer::Relu,
                TAG_SOFTPLUS => Layer::Softplus {
                    beta: r.f64()?,
                },
                TAG_POOL => Layer::AvgPool,
                t => return Err(Error::format("weight file", format!("unknown layer tag {t}"))),
            });
        }
        let spec = FeatNetSpec {
            layers,
            input_scale,
            input_offset,
        };
        spec.validate()
            .map_err(|e| Error::format("weight file", e.to_string()))?;
        let mut convs = Vec::new();
        for layer in &spec.layers {
            if let Layer::Conv { in_ch, out_ch } = *layer {
                let mut c = ConvWeights::zeros(in_ch, out_ch);
                for v in c.kernel.iter_mut().chain(c.bias.iter_mut()) {
                    *v = T::lit(f64::from(r.f32()?));
                }
                convs.push(c);
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::format("weight file", "trailing bytes after weights"));
        }
        FeatNet::new(spec, FeatNetWeights { convs })
    }

    pub fn save_weights(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load_weights(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featnet::Activation;

    #[test]
    fn save_load_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        for spec in [FeatNetSpec::default(), FeatNetSpec::softplus(&[3, 4, 5])] {
            let net = FeatNet::<f64>::init_random(spec, 42).unwrap();
            net.save_weights(&path).unwrap();
            let back = FeatNet::<f64>::load_weights(&path).unwrap();
            assert_eq!(back.spec(), net.spec());
            for (a, b) in net.weights().convs.iter().zip(&back.weights().convs) {
                assert!(a.kernel.iter().zip(&b.kernel).all(|(p, q)| p.to_bits() == q.to_bits()));
                assert!(a.bias.iter().zip(&b.bias).all(|(p, q)| p.to_bits() == q.to_bits()));
            }
            assert_eq!(back.to_bytes(), net.to_bytes());
        }
    }

    #[test]
    fn rejects_corrupt_files() {
        let net = FeatNet::<f64>::init_random(FeatNetSpec::stack(&[2], Activation::Relu), 1).unwrap();
        let good = net.to_bytes();
        assert!(FeatNet::<f64>::from_bytes(&good[..good.len() - 1]).is_err());
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(FeatNet::<f64>::from_bytes(&bad_magic).is_err());
        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(FeatNet::<f64>::from_bytes(&bad_version).is_err());
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(FeatNet::<f64>::from_bytes(&trailing).is_err());
        let mut bad_shape = good;
        // in_ch of the first conv descriptor no longer chains from the input
        bad_shape[29] = 2;
        assert!(FeatNet::<f64>::from_bytes(&bad_shape).is_err());
    }
}
