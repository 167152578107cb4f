//! Luma planes, macroblock partitioning and pixel-domain quality metrics.
//!
//! Planes are always padded to a multiple of [`BLOCK_SIZE`] in both
//! directions by replicating the last column and row. The pre-padding size
//! is kept so metrics and PGM output only see the original picture.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Macroblock edge length in pixels.
pub const BLOCK_SIZE: usize = 16;
/// Pixels per macroblock.
pub const BLOCK_PIXELS: usize = BLOCK_SIZE * BLOCK_SIZE;

/// A row-major 16x16 block of real-valued pixels.
pub type Block<T> = [T; BLOCK_PIXELS];

/// Single-channel 8-bit image padded to whole macroblocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    stride: usize,
    orig_width: usize,
    orig_height: usize,
    samples: Vec<u8>,
}

fn pad_to_block(v: usize) -> usize {
    v.div_ceil(BLOCK_SIZE).max(1) * BLOCK_SIZE
}

impl ImagePlane {
    /// Builds a padded plane from `orig_width * orig_height` row-major samples.
    pub fn from_samples(orig_width: usize, orig_height: usize, data: &[u8]) -> Result<Self> {
        if orig_width == 0 || orig_height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if data.len() != orig_width * orig_height {
            return Err(Error::shape(format!(
                "expected {} samples for {}x{}, got {}",
                orig_width * orig_height,
                orig_width,
                orig_height,
                data.len()
            )));
        }
        let width = pad_to_block(orig_width);
        let height = pad_to_block(orig_height);
        let mut samples = vec![0u8; width * height];
        for y in 0..height {
            let src_row = &data[y.min(orig_height - 1) * orig_width..][..orig_width];
            let dst_row = &mut samples[y * width..][..width];
            dst_row[..orig_width].copy_from_slice(src_row);
            let edge = src_row[orig_width - 1];
            dst_row[orig_width..].fill(edge);
        }
        Ok(ImagePlane {
            width,
            height,
            stride: width,
            orig_width,
            orig_height,
            samples,
        })
    }

    /// A plane of a single value.
    pub fn filled(orig_width: usize, orig_height: usize, value: u8) -> Result<Self> {
        Self::from_samples(orig_width, orig_height, &vec![value; orig_width * orig_height])
    }

    /// Wraps already padded samples, keeping the given original dimensions.
    pub(crate) fn from_padded(
        width: usize,
        height: usize,
        orig_width: usize,
        orig_height: usize,
        samples: Vec<u8>,
    ) -> Result<Self> {
        if !width.is_multiple_of(BLOCK_SIZE) || !height.is_multiple_of(BLOCK_SIZE) {
            return Err(Error::shape("padded dimensions must be multiples of 16"));
        }
        if orig_width == 0
            || orig_height == 0
            || orig_width > width
            || orig_height > height
            || width >= orig_width + BLOCK_SIZE
            || height >= orig_height + BLOCK_SIZE
        {
            return Err(Error::shape(format!(
                "original size {orig_width}x{orig_height} incompatible with padded {width}x{height}"
            )));
        }
        if samples.len() != width * height {
            return Err(Error::shape("sample count does not match padded size"));
        }
        Ok(ImagePlane {
            width,
            height,
            stride: width,
            orig_width,
            orig_height,
            samples,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn orig_width(&self) -> usize {
        self.orig_width
    }

    pub fn orig_height(&self) -> usize {
        self.orig_height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.stride + x]
    }

    pub fn grid(&self) -> BlockGrid {
        BlockGrid::new(self.width, self.height).expect("plane dimensions are block aligned")
    }

    /// The whole padded plane as reals, row-major.
    pub fn to_real<T: Real>(&self) -> Vec<T> {
        self.samples.iter().map(|&s| T::lit(f64::from(s))).collect()
    }

    /// Row-major 16x16 pixel values of block `index`.
    pub fn extract_block<T: Real>(&self, index: usize) -> Result<Block<T>> {
        let (bx, by) = self.grid().block_origin(index)?;
        let mut out = [T::zero(); BLOCK_PIXELS];
        for r in 0..BLOCK_SIZE {
            let row = &self.samples[(by + r) * self.stride + bx..][..BLOCK_SIZE];
            for (dst, &s) in out[r * BLOCK_SIZE..][..BLOCK_SIZE].iter_mut().zip(row) {
                *dst = T::lit(f64::from(s));
            }
        }
        Ok(out)
    }

    /// Copies 8-bit block samples into block `index`.
    pub fn put_block(&mut self, index: usize, block: &[u8; BLOCK_PIXELS]) -> Result<()> {
        let (bx, by) = self.grid().block_origin(index)?;
        for r in 0..BLOCK_SIZE {
            self.samples[(by + r) * self.stride + bx..][..BLOCK_SIZE]
                .copy_from_slice(&block[r * BLOCK_SIZE..][..BLOCK_SIZE]);
        }
        Ok(())
    }

    /// Reads a binary PGM file (P5, maxval 255).
    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::decode_pgm(&bytes)
    }

    pub fn decode_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        if bytes.len() < 2 || &bytes[..2] != b"P5" {
            return Err(Error::format("pgm", "missing P5 magic"));
        }
        pos += 2;
        let mut fields = [0usize; 3];
        for field in fields.iter_mut() {
            *field = pgm_header_number(bytes, &mut pos)?;
        }
        let [w, h, maxval] = fields;
        if maxval != 255 {
            return Err(Error::format("pgm", format!("maxval {maxval} unsupported, expected 255")));
        }
        if w == 0 || h == 0 {
            return Err(Error::format("pgm", "zero dimension"));
        }
        // exactly one whitespace byte separates the header from the raster
        match bytes.get(pos) {
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            _ => return Err(Error::format("pgm", "missing whitespace after maxval")),
        }
        let need = w
            .checked_mul(h)
            .ok_or_else(|| Error::format("pgm", "dimensions overflow"))?;
        let raster = bytes
            .get(pos..pos + need)
            .ok_or_else(|| Error::format("pgm", format!("truncated raster: need {need} bytes")))?;
        Self::from_samples(w, h, raster)
    }

    /// Encodes the unpadded region as a binary PGM.
    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.orig_width, self.orig_height).into_bytes();
        out.reserve(self.orig_width * self.orig_height);
        for y in 0..self.orig_height {
            out.extend_from_slice(&self.samples[y * self.stride..][..self.orig_width]);
        }
        out
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.encode_pgm())?;
        Ok(())
    }
}

fn pgm_header_number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(_) => break,
            None => return Err(Error::format("pgm", "truncated header")),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format("pgm", "expected a decimal header field"));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format("pgm", "header field out of range"))
}

/// Raster of 16x16 macroblocks in row-major order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockGrid {
    cols: usize,
    rows: usize,
}

impl BlockGrid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || !width.is_multiple_of(BLOCK_SIZE) || !height.is_multiple_of(BLOCK_SIZE) {
            return Err(Error::shape(format!("{width}x{height} is not a whole number of macroblocks")));
        }
        Ok(BlockGrid {
            cols: width / BLOCK_SIZE,
            rows: height / BLOCK_SIZE,
        })
    }

    pub fn block_size(&self) -> usize {
        BLOCK_SIZE
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.cols * BLOCK_SIZE
    }

    pub fn height(&self) -> usize {
        self.rows * BLOCK_SIZE
    }

    /// Number of macroblocks.
    pub fn n_b(&self) -> usize {
        self.cols * self.rows
    }

    /// Top-left pixel `(x, y)` of block `index`.
    pub fn block_origin(&self, index: usize) -> Result<(usize, usize)> {
        if index >= self.n_b() {
            return Err(Error::invalid(format!(
                "block index {index} out of range for {} blocks",
                self.n_b()
            )));
        }
        Ok(((index % self.cols) * BLOCK_SIZE, (index / self.cols) * BLOCK_SIZE))
    }

    /// Plane-wide pixel index of every pixel of block `index`, in block row-major order.
    pub fn pixel_indices(&self, index: usize) -> Result<impl Iterator<Item = usize>> {
        let (bx, by) = self.block_origin(index)?;
        let width = self.width();
        Ok((0..BLOCK_PIXELS).map(move |k| (by + k / BLOCK_SIZE) * width + bx + k % BLOCK_SIZE))
    }
}

/// Mean squared error over the unpadded region.
pub fn mse(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    if a.orig_width != b.orig_width || a.orig_height != b.orig_height {
        return Err(Error::shape(format!(
            "psnr on {}x{} vs {}x{}",
            a.orig_width, a.orig_height, b.orig_width, b.orig_height
        )));
    }
    let mut acc = 0u64;
    for y in 0..a.orig_height {
        let ra = &a.samples[y * a.stride..][..a.orig_width];
        let rb = &b.samples[y * b.stride..][..b.orig_width];
        for (&p, &q) in ra.iter().zip(rb) {
            let d = i64::from(p) - i64::from(q);
            acc += (d * d) as u64;
        }
    }
    Ok(acc as f64 / (a.orig_width * a.orig_height) as f64)
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` for identical planes.
pub fn psnr(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0f64 * 255.0 / m).log10())
}
