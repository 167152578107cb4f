//! Differentiable feature extractors.
//!
//! [`FeatNet`] is a small fully convolutional network (3x3 convolutions,
//! ReLU/Softplus, 2x2 average pooling) with exact reverse-mode
//! vector-Jacobian products and forward-mode Jacobian-vector products.
//! [`DenseLinear`] is an explicit matrix `f(x) = W x` used for oracles.
//!
//! Both implement [`FeatureExtractor`]. Inputs are raw pixel values laid
//! out row-major; outputs are channel-major feature maps.

mod kernels;
mod linear;
mod weights;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use linear::DenseLinear;
pub use weights::{WEIGHTS_MAGIC, WEIGHTS_VERSION};

/// Spatial size of a single-channel network input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Extent {
    pub height: usize,
    pub width: usize,
}

impl Extent {
    pub fn new(height: usize, width: usize) -> Self {
        Extent { height, width }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}

/// Layout of a channel-major feature tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl FeatureShape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }
}

/// Snapshot of the work an extractor has performed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub forward_passes: u64,
    pub backward_passes: u64,
    pub tangent_passes: u64,
    /// Multiply-accumulates spent in forward evaluation.
    pub forward_macs: u64,
    /// Multiply-accumulates spent in reverse and tangent passes.
    pub derivative_macs: u64,
}

impl OpCounts {
    pub fn since(&self, earlier: &OpCounts) -> OpCounts {
        OpCounts {
            forward_passes: self.forward_passes - earlier.forward_passes,
            backward_passes: self.backward_passes - earlier.backward_passes,
            tangent_passes: self.tangent_passes - earlier.tangent_passes,
            forward_macs: self.forward_macs - earlier.forward_macs,
            derivative_macs: self.derivative_macs - earlier.derivative_macs,
        }
    }

    pub fn total_macs(&self) -> u64 {
        self.forward_macs + self.derivative_macs
    }
}

/// Thread-safe instrumentation counters.
#[derive(Debug, Default)]
pub struct OpStats {
    forward_passes: AtomicU64,
    backward_passes: AtomicU64,
    tangent_passes: AtomicU64,
    forward_macs: AtomicU64,
    derivative_macs: AtomicU64,
}

impl OpStats {
    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            forward_passes: self.forward_passes.load(Ordering::Relaxed),
            backward_passes: self.backward_passes.load(Ordering::Relaxed),
            tangent_passes: self.tangent_passes.load(Ordering::Relaxed),
            forward_macs: self.forward_macs.load(Ordering::Relaxed),
            derivative_macs: self.derivative_macs.load(Ordering::Relaxed),
        }
    }

    pub(crate) fn forward(&self, macs: u64) {
        self.forward_passes.fetch_add(1, Ordering::Relaxed);
        self.forward_macs.fetch_add(macs, Ordering::Relaxed);
    }

    pub(crate) fn backward(&self, macs: u64) {
        self.backward_passes.fetch_add(1, Ordering::Relaxed);
        self.derivative_macs.fetch_add(macs, Ordering::Relaxed);
    }

    pub(crate) fn tangent(&self, macs: u64) {
        self.tangent_passes.fetch_add(1, Ordering::Relaxed);
        self.derivative_macs.fetch_add(macs, Ordering::Relaxed);
    }
}

/// A differentiable map from an image to a feature vector.
pub trait FeatureExtractor<T: Real>: Sync {
    /// State retained by one forward pass, reusable for any number of
    /// derivative products at the same input.
    type Tape<'a>: Linearization<T>
    where
        Self: 'a;

    fn output_shape(&self, extent: Extent) -> Result<FeatureShape>;

    /// Runs a forward pass at `input` and keeps what the derivative passes need.
    fn linearize<'a>(&'a self, input: &[T], extent: Extent) -> Result<Self::Tape<'a>>;

    fn forward(&self, input: &[T], extent: Extent) -> Result<Vec<T>> {
        Ok(self.linearize(input, extent)?.output().to_vec())
    }

    /// `vᵀ J(x)` as a pixel-indexed vector.
    fn vjp(&self, input: &[T], extent: Extent, cotangent: &[T]) -> Result<Vec<T>> {
        self.linearize(input, extent)?.vjp(cotangent)
    }

    /// `J(x) d` as a feature-indexed vector.
    fn jvp(&self, input: &[T], extent: Extent, direction: &[T]) -> Result<Vec<T>> {
        self.linearize(input, extent)?.jvp(direction)
    }

    fn op_counts(&self) -> OpCounts {
        OpCounts::default()
    }
}

/// The Jacobian of an extractor frozen at one input.
pub trait Linearization<T: Real>: Sync {
    fn output(&self) -> &[T];
    fn feature_shape(&self) -> FeatureShape;
    fn input_len(&self) -> usize;
    fn vjp(&self, cotangent: &[T]) -> Result<Vec<T>>;
    fn jvp(&self, direction: &[T]) -> Result<Vec<T>>;
}

/// Central finite-difference estimate of `J(x) d`.
pub fn finite_diff_jvp<T: Real, E: FeatureExtractor<T> + ?Sized>(
    net: &E,
    input: &[T],
    extent: Extent,
    direction: &[T],
    h: T,
) -> Result<Vec<T>> {
    if !(h > T::zero()) {
        return Err(Error::invalid("finite difference step must be positive"));
    }
    if direction.len() != input.len() {
        return Err(Error::shape("direction length differs from input length"));
    }
    let plus: Vec<T> = input.iter().zip(direction).map(|(&x, &d)| x + h * d).collect();
    let minus: Vec<T> = input.iter().zip(direction).map(|(&x, &d)| x - h * d).collect();
    let fp = net.forward(&plus, extent)?;
    let fm = net.forward(&minus, extent)?;
    let two_h = h + h;
    Ok(fp.iter().zip(&fm).map(|(&a, &b)| (a - b) / two_h).collect())
}

/// One stage of a [`FeatNetSpec`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Layer {
    /// 3x3 convolution, stride 1, zero padding 1.
    Conv { in_ch: usize, out_ch: usize },
    Relu,
    Softplus { beta: f64 },
    /// 2x2 average pooling with stride 2.
    AvgPool,
}

impl Layer {
    pub fn is_nonlinear(&self) -> bool {
        matches!(self, Layer::Relu | Layer::Softplus { .. })
    }
}

/// Activation used by the preset architectures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    Softplus { beta: f64 },
    /// No nonlinearity; yields a linear network for tests.
    Identity,
}

pub const DEFAULT_SOFTPLUS_BETA: f64 = 10.0;

/// Architecture of a [`FeatNet`].
#[derive(Clone, Debug, PartialEq)]
pub struct FeatNetSpec {
    pub layers: Vec<Layer>,
    pub input_scale: f64,
    pub input_offset: f64,
}

impl Default for FeatNetSpec {
    fn default() -> Self {
        FeatNetSpec::stack(&[8, 16], Activation::Relu)
    }
}

impl FeatNetSpec {
    /// `conv -> activation -> pool` repeated once per entry of `channels`.
    pub fn stack(channels: &[usize], activation: Activation) -> Self {
        let mut layers = Vec::new();
        let mut in_ch = 1;
        for &out_ch in channels {
            layers.push(Layer::Conv { in_ch, out_ch });
            match activation {
                Activation::Relu => layers.push(Layer::Relu),
                Activation::Softplus { beta } => layers.push(Layer::Softplus { beta }),
                Activation::Identity => {}
            }
            layers.push(Layer::AvgPool);
            in_ch = out_ch;
        }
        FeatNetSpec {
            layers,
            input_scale: 1.0 / 255.0,
            input_offset: 0.0,
        }
    }

    pub fn softplus(channels: &[usize]) -> Self {
        Self::stack(
            channels,
            Activation::Softplus {
                beta: DEFAULT_SOFTPLUS_BETA,
            },
        )
    }

    pub fn is_linear(&self) -> bool {
        !self.layers.iter().any(Layer::is_nonlinear)
    }

    pub fn pool_count(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, Layer::AvgPool)).count()
    }

    /// Checks channel chaining. Returns the number of output channels.
    pub fn validate(&self) -> Result<usize> {
        if !(self.input_scale.is_finite() && self.input_offset.is_finite()) {
            return Err(Error::invalid("input normalization must be finite"));
        }
        let mut ch = 1;
        for (k, layer) in self.layers.iter().enumerate() {
            match *layer {
                Layer::Conv { in_ch, out_ch } => {
                    if in_ch != ch || out_ch == 0 {
                        return Err(Error::shape(format!(
                            "layer {k}: conv expects {in_ch} input channels, previous layer provides {ch}"
                        )));
                    }
                    ch = out_ch;
                }
                Layer::Softplus { beta } if !(beta > 0.0 && beta.is_finite()) => {
                    return Err(Error::invalid(format!("layer {k}: softplus beta must be positive")));
                }
                _ => {}
            }
        }
        Ok(ch)
    }

    /// Output layout for an input of the given size.
    pub fn output_shape(&self, extent: Extent) -> Result<FeatureShape> {
        let channels = self.validate()?;
        let mut h = extent.height;
        let mut w = extent.width;
        if h == 0 || w == 0 {
            return Err(Error::shape("empty input"));
        }
        for layer in &self.layers {
            if let Layer::AvgPool = layer {
                if !h.is_multiple_of(2) || !w.is_multiple_of(2) {
                    return Err(Error::shape(format!(
                        "input {}x{} not divisible by {} for pooling",
                        extent.height,
                        extent.width,
                        1usize << self.pool_count()
                    )));
                }
                h /= 2;
                w /= 2;
            }
        }
        Ok(FeatureShape {
            channels,
            height: h,
            width: w,
        })
    }

    /// Exact multiply-accumulate count of one forward pass, per conv layer.
    ///
    /// Zero-padding taps are not executed, so a 3x3 convolution over
    /// `h x w` costs `out * in * (3h - 2) * (3w - 2)`.
    pub fn conv_macs(&self, extent: Extent) -> Result<Vec<u64>> {
        self.output_shape(extent)?;
        let mut h = extent.height as u64;
        let mut w = extent.width as u64;
        let mut out = Vec::new();
        for layer in &self.layers {
            match *layer {
                Layer::Conv { in_ch, out_ch } => {
                    out.push(in_ch as u64 * out_ch as u64 * (3 * h - 2) * (3 * w - 2));
                }
                Layer::AvgPool => {
                    h /= 2;
                    w /= 2;
                }
                _ => {}
            }
        }
        Ok(out)
    }
}

/// Kernel and bias for one convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    /// `out_ch x in_ch x 3 x 3`, row-major.
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvWeights<T> {
    pub fn zeros(in_ch: usize, out_ch: usize) -> Self {
        ConvWeights {
            in_ch,
            out_ch,
            kernel: vec![T::zero(); out_ch * in_ch * 9],
            bias: vec![T::zero(); out_ch],
        }
    }

    #[inline]
    pub fn tap(&self, o: usize, i: usize, ky: usize, kx: usize) -> T {
        self.kernel[((o * self.in_ch + i) * 3 + ky) * 3 + kx]
    }
}

/// Weights for every convolution of a [`FeatNetSpec`], in layer order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatNetWeights<T> {
    pub convs: Vec<ConvWeights<T>>,
}

impl<T: Real> FeatNetWeights<T> {
    pub fn zeros(spec: &FeatNetSpec) -> Self {
        let convs = spec
            .layers
            .iter()
            .filter_map(|l| match *l {
                Layer::Conv { in_ch, out_ch } => Some(ConvWeights::zeros(in_ch, out_ch)),
                _ => None,
            })
            .collect();
        FeatNetWeights { convs }
    }

    /// He-style fan-in initialisation from a seeded generator.
    ///
    /// Values are drawn in single precision so that `f32` and `f64`
    /// networks built from the same seed hold identical weights.
    pub fn init_random(spec: &FeatNetSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Self::zeros(spec);
        for conv in &mut w.convs {
            let std = (2.0 / (conv.in_ch as f64 * 9.0)).sqrt() as f32;
            let normal = Normal::new(0.0f32, std).expect("positive std");
            for k in conv.kernel.iter_mut() {
                *k = T::lit(f64::from(normal.sample(&mut rng)));
            }
            for b in conv.bias.iter_mut() {
                *b = T::lit(f64::from(rng.random_range(-0.05f32..0.05f32)));
            }
        }
        w
    }

    fn check(&self, spec: &FeatNetSpec) -> Result<()> {
        let shapes: Vec<(usize, usize)> = spec
            .layers
            .iter()
            .filter_map(|l| match *l {
                Layer::Conv { in_ch, out_ch } => Some((in_ch, out_ch)),
                _ => None,
            })
            .collect();
        if shapes.len() != self.convs.len() {
            return Err(Error::shape(format!(
                "spec has {} conv layers, weights have {}",
                shapes.len(),
                self.convs.len()
            )));
        }
        for (k, (conv, &(in_ch, out_ch))) in self.convs.iter().zip(&shapes).enumerate() {
            if conv.in_ch != in_ch
                || conv.out_ch != out_ch
                || conv.kernel.len() != out_ch * in_ch * 9
                || conv.bias.len() != out_ch
            {
                return Err(Error::shape(format!("conv {k}: weight shape does not match spec")));
            }
            if conv.kernel.iter().chain(&conv.bias).any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("conv {k}: non-finite weight")));
            }
        }
        Ok(())
    }
}

/// A toy convolutional feature extractor with instrumentation.
#[derive(Debug)]
pub struct FeatNet<T> {
    spec: FeatNetSpec,
    weights: FeatNetWeights<T>,
    stats: OpStats,
}

impl<T: Real> Clone for FeatNet<T> {
    fn clone(&self) -> Self {
        FeatNet {
            spec: self.spec.clone(),
            weights: self.weights.clone(),
            stats: OpStats::default(),
        }
    }
}

impl<T: Real> FeatNet<T> {
    pub fn new(spec: FeatNetSpec, weights: FeatNetWeights<T>) -> Result<Self> {
        spec.validate()?;
        weights.check(&spec)?;
        Ok(FeatNet {
            spec,
            weights,
            stats: OpStats::default(),
        })
    }

    pub fn init_random(spec: FeatNetSpec, seed: u64) -> Result<Self> {
        let weights = FeatNetWeights::init_random(&spec, seed);
        Self::new(spec, weights)
    }

    pub fn spec(&self) -> &FeatNetSpec {
        &self.spec
    }

    pub fn weights(&self) -> &FeatNetWeights<T> {
        &self.weights
    }

    pub fn stats(&self) -> &OpStats {
        &self.stats
    }

    fn check_input(&self, input: &[T], extent: Extent) -> Result<FeatureShape> {
        if input.len() != extent.pixels() {
            return Err(Error::shape(format!(
                "input has {} values, extent {}x{} needs {}",
                input.len(),
                extent.height,
                extent.width,
                extent.pixels()
            )));
        }
        self.spec.output_shape(extent)
    }

    fn normalize(&self, input: &[T]) -> Vec<T> {
        let scale = T::lit(self.spec.input_scale);
        let offset = T::lit(self.spec.input_offset);
        input.iter().map(|&x| x * scale + offset).collect()
    }
}

/// Activations of one forward pass through a [`FeatNet`].
pub struct FeatNetTape<'a, T> {
    net: &'a FeatNet<T>,
    /// `acts[k]` is the input to layer `k`; the last entry is the output.
    acts: Vec<Vec<T>>,
    /// `(channels, height, width)` of each entry of `acts`.
    dims: Vec<(usize, usize, usize)>,
    shape: FeatureShape,
}

impl<T: Real> FeatNetTape<'_, T> {
    /// Smallest absolute pre-activation feeding any ReLU/Softplus layer.
    pub fn min_preactivation_margin(&self) -> T {
        let mut m = T::infinity();
        for (k, layer) in self.net.spec.layers.iter().enumerate() {
            if layer.is_nonlinear() {
                for &z in &self.acts[k] {
                    m = m.min(z.abs());
                }
            }
        }
        m
    }

    /// Sign pattern of every ReLU pre-activation, for kink detection.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for (k, layer) in self.net.spec.layers.iter().enumerate() {
            if let Layer::Relu = layer {
                out.extend(self.acts[k].iter().map(|&z| z > T::zero()));
            }
        }
        out
    }
}

impl<T: Real> FeatureExtractor<T> for FeatNet<T> {
    type Tape<'a> = FeatNetTape<'a, T>;

    fn output_shape(&self, extent: Extent) -> Result<FeatureShape> {
        self.spec.output_shape(extent)
    }

    fn linearize<'a>(&'a self, input: &[T], extent: Extent) -> Result<FeatNetTape<'a, T>> {
        let shape = self.check_input(input, extent)?;
        let mut acts = Vec::with_capacity(self.spec.layers.len() + 1);
        let mut dims = Vec::with_capacity(self.spec.layers.len() + 1);
        let mut cur = self.normalize(input);
        let mut dim = (1, extent.height, extent.width);
        let mut macs = 0u64;
        let mut conv_idx = 0;
        for layer in &self.spec.layers {
            let (next, next_dim) = match *layer {
                Layer::Conv { .. } => {
                    let w = &self.weights.convs[conv_idx];
                    conv_idx += 1;
                    let (out, m) = kernels::conv_forward(w, &cur, dim.1, dim.2, true);
                    macs += m;
                    (out, (w.out_ch, dim.1, dim.2))
                }
                Layer::Relu => (kernels::relu(&cur), dim),
                Layer::Softplus { beta } => (kernels::softplus(&cur, T::lit(beta)), dim),
                Layer::AvgPool => (
                    kernels::avg_pool_forward(&cur, dim.0, dim.1, dim.2),
                    (dim.0, dim.1 / 2, dim.2 / 2),
                ),
            };
            acts.push(cur);
            dims.push(dim);
            cur = next;
            dim = next_dim;
        }
        acts.push(cur);
        dims.push(dim);
        self.stats.forward(macs);
        Ok(FeatNetTape {
            net: self,
            acts,
            dims,
            shape,
        })
    }

    fn forward(&self, input: &[T], extent: Extent) -> Result<Vec<T>> {
        self.check_input(input, extent)?;
        let mut cur = self.normalize(input);
        let mut dim = (1, extent.height, extent.width);
        let mut macs = 0u64;
        let mut conv_idx = 0;
        for layer in &self.spec.layers {
            match *layer {
                Layer::Conv { .. } => {
                    let w = &self.weights.convs[conv_idx];
                    conv_idx += 1;
                    let (out, m) = kernels::conv_forward(w, &cur, dim.1, dim.2, true);
                    macs += m;
                    cur = out;
                    dim.0 = w.out_ch;
                }
                Layer::Relu => kernels::relu_in_place(&mut cur),
                Layer::Softplus { beta } => cur = kernels::softplus(&cur, T::lit(beta)),
                Layer::AvgPool => {
                    cur = kernels::avg_pool_forward(&cur, dim.0, dim.1, dim.2);
                    dim = (dim.0, dim.1 / 2, dim.2 / 2);
                }
            }
        }
        self.stats.forward(macs);
        Ok(cur)
    }

    fn op_counts(&self) -> OpCounts {
        self.stats.snapshot()
    }
}

impl<T: Real> Linearization<T> for FeatNetTape<'_, T> {
    fn output(&self) -> &[T] {
        self.acts.last().expect("tape has an output")
    }

    fn feature_shape(&self) -> FeatureShape {
        self.shape
    }

    fn input_len(&self) -> usize {
        self.acts[0].len()
    }

    fn vjp(&self, cotangent: &[T]) -> Result<Vec<T>> {
        if cotangent.len() != self.shape.len() {
            return Err(Error::shape(format!(
                "cotangent has {} entries, features have {}",
                cotangent.len(),
                self.shape.len()
            )));
        }
        let layers = &self.net.spec.layers;
        let mut grad = cotangent.to_vec();
        let mut conv_idx = self.net.weights.convs.len();
        let mut macs = 0u64;
        for (k, layer) in layers.iter().enumerate().rev() {
            let (c, h, w) = self.dims[k];
            match *layer {
                Layer::Conv { .. } => {
                    conv_idx -= 1;
                    let wts = &self.net.weights.convs[conv_idx];
                    let (g, m) = kernels::conv_backward(wts, &grad, h, w);
                    macs += m;
                    grad = g;
                }
                Layer::Relu => {
                    for (g, &z) in grad.iter_mut().zip(&self.acts[k]) {
                        if z <= T::zero() {
                            *g = T::zero();
                        }
                    }
                }
                Layer::Softplus { beta } => {
                    let beta = T::lit(beta);
                    for (g, &z) in grad.iter_mut().zip(&self.acts[k]) {
                        *g *= kernels::sigmoid(beta * z);
                    }
                }
                Layer::AvgPool => grad = kernels::avg_pool_backward(&grad, c, h, w),
            }
        }
        let scale = T::lit(self.net.spec.input_scale);
        for g in grad.iter_mut() {
            *g *= scale;
        }
        self.net.stats.backward(macs);
        Ok(grad)
    }

    fn jvp(&self, direction: &[T]) -> Result<Vec<T>> {
        if direction.len() != self.input_len() {
            return Err(Error::shape("direction length differs from input length"));
        }
        let scale = T::lit(self.net.spec.input_scale);
        let mut tan: Vec<T> = direction.iter().map(|&d| d * scale).collect();
        let mut conv_idx = 0;
        let mut macs = 0u64;
        for (k, layer) in self.net.spec.layers.iter().enumerate() {
            let (c, h, w) = self.dims[k];
            match *layer {
                Layer::Conv { .. } => {
                    let wts = &self.net.weights.convs[conv_idx];
                    conv_idx += 1;
                    let (t, m) = kernels::conv_forward(wts, &tan, h, w, false);
                    macs += m;
                    tan = t;
                }
                Layer::Relu => {
                    for (t, &z) in tan.iter_mut().zip(&self.acts[k]) {
                        if z <= T::zero() {
                            *t = T::zero();
                        }
                    }
                }
                Layer::Softplus { beta } => {
                    let beta = T::lit(beta);
                    for (t, &z) in tan.iter_mut().zip(&self.acts[k]) {
                        *t *= kernels::sigmoid(beta * z);
                    }
                }
                Layer::AvgPool => tan = kernels::avg_pool_forward(&tan, c, h, w),
            }
        }
        self.net.stats.tangent(macs);
        Ok(tan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_image(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 33) % 256) as f64
            })
            .collect()
    }

    fn lcg_vec(n: usize, seed: u64) -> Vec<f64> {
        lcg_image(n, seed).into_iter().map(|v| v / 128.0 - 1.0).collect()
    }

    /// Straight nested-loop reference of a whole network forward pass.
    fn naive_forward(net: &FeatNet<f64>, input: &[f64], extent: Extent) -> Vec<f64> {
        let spec = net.spec();
        let mut cur: Vec<f64> = input
            .iter()
            .map(|&x| x * spec.input_scale + spec.input_offset)
            .collect();
        let (mut c, mut h, mut w) = (1usize, extent.height, extent.width);
        let mut ci = 0;
        for layer in &spec.layers {
            match *layer {
                Layer::Conv { in_ch, out_ch } => {
                    let wt = &net.weights().convs[ci];
                    ci += 1;
                    let mut out = vec![0.0; out_ch * h * w];
                    for o in 0..out_ch {
                        for y in 0..h {
                            for x in 0..w {
                                let mut acc = wt.bias[o];
                                for i in 0..in_ch {
                                    for ky in 0..3 {
                                        for kx in 0..3 {
                                            let yy = y as isize + ky as isize - 1;
                                            let xx = x as isize + kx as isize - 1;
                                            if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                                                acc += wt.tap(o, i, ky, kx)
                                                    * cur[(i * h + yy as usize) * w + xx as usize];
                                            }
                                        }
                                    }
                                }
                                out[(o * h + y) * w + x] = acc;
                            }
                        }
                    }
                    cur = out;
                    c = out_ch;
                }
                Layer::Relu => cur.iter_mut().for_each(|v| *v = v.max(0.0)),
                Layer::Softplus { beta } => {
                    cur.iter_mut().for_each(|v| *v = (1.0 + (beta * *v).exp()).ln() / beta)
                }
                Layer::AvgPool => {
                    let mut out = vec![0.0; c * (h / 2) * (w / 2)];
                    for ch in 0..c {
                        for y in 0..h / 2 {
                            for x in 0..w / 2 {
                                let mut s = 0.0;
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        s += cur[(ch * h + 2 * y + dy) * w + 2 * x + dx];
                                    }
                                }
                                out[(ch * (h / 2) + y) * (w / 2) + x] = s / 4.0;
                            }
                        }
                    }
                    cur = out;
                    h /= 2;
                    w /= 2;
                }
            }
        }
        cur
    }

    #[test]
    fn zero_weights_give_zero_features() {
        let spec = FeatNetSpec::default();
        let net = FeatNet::new(spec.clone(), FeatNetWeights::<f64>::zeros(&spec)).unwrap();
        let x = lcg_image(32 * 32, 1);
        let f = net.forward(&x, Extent::new(32, 32)).unwrap();
        assert_eq!(f.len(), 16 * 8 * 8);
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_returns_normalized_input() {
        let spec = FeatNetSpec {
            layers: vec![Layer::Conv { in_ch: 1, out_ch: 1 }],
            input_scale: 1.0 / 255.0,
            input_offset: 0.0,
        };
        let mut w = FeatNetWeights::<f64>::zeros(&spec);
        w.convs[0].kernel[4] = 1.0;
        let net = FeatNet::new(spec, w).unwrap();
        let x = lcg_image(12 * 8, 2);
        let f = net.forward(&x, Extent::new(12, 8)).unwrap();
        for (a, b) in f.iter().zip(&x) {
            assert_eq!(*a, b * (1.0 / 255.0));
        }
    }

    #[test]
    fn forward_matches_naive_loops() {
        for (spec, seed) in [
            (FeatNetSpec::default(), 3u64),
            (FeatNetSpec::softplus(&[4, 6, 5]), 4),
        ] {
            let net = FeatNet::<f64>::init_random(spec, seed).unwrap();
            let extent = Extent::new(24, 16);
            let x = lcg_image(extent.pixels(), seed);
            let fast = net.forward(&x, extent).unwrap();
            let slow = naive_forward(&net, &x, extent);
            let tape = net.linearize(&x, extent).unwrap();
            assert_eq!(tape.output(), &fast[..]);
            let scale = slow.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-6 * scale, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let net = FeatNet::<f64>::init_random(FeatNetSpec::default(), 9).unwrap();
        let x = lcg_image(32 * 32, 9);
        let a = net.forward(&x, Extent::new(32, 32)).unwrap();
        let b = net.forward(&x, Extent::new(32, 32)).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn rejects_bad_shapes() {
        let net = FeatNet::<f64>::init_random(FeatNetSpec::default(), 1).unwrap();
        assert!(net.forward(&[0.0; 30 * 32], Extent::new(30, 32)).is_err());
        assert!(net.forward(&[0.0; 10], Extent::new(32, 32)).is_err());
        let x = vec![0.0; 32 * 32];
        assert!(net.vjp(&x, Extent::new(32, 32), &[0.0; 3]).is_err());
        let bad = FeatNetSpec {
            layers: vec![Layer::Conv { in_ch: 2, out_ch: 3 }],
            input_scale: 1.0,
            input_offset: 0.0,
        };
        assert!(bad.validate().is_err());
        let mut w = FeatNetWeights::<f64>::zeros(&FeatNetSpec::default());
        w.convs[1].kernel[0] = f64::NAN;
        assert!(FeatNet::new(FeatNetSpec::default(), w).is_err());
    }

    #[test]
    fn zero_cotangent_and_direction() {
        let net = FeatNet::<f64>::init_random(FeatNetSpec::default(), 5).unwrap();
        let e = Extent::new(16, 16);
        let x = lcg_image(256, 5);
        let g = net.vjp(&x, e, &vec![0.0; 16 * 4 * 4]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        let d = finite_diff_jvp(&net, &x, e, &[0.0; 256], 1e-3).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
        assert!(finite_diff_jvp(&net, &x, e, &[0.0; 256], 0.0).is_err());
    }

    #[test]
    fn linear_conv_net_fd_is_exact() {
        let spec = FeatNetSpec::stack(&[3, 2], Activation::Identity);
        assert!(spec.is_linear());
        let net = FeatNet::<f64>::init_random(spec, 11).unwrap();
        let e = Extent::new(16, 16);
        let x = lcg_image(256, 6);
        let d = lcg_vec(256, 7);
        let exact = net.jvp(&x, e, &d).unwrap();
        for h in [1e-2, 1.0, 37.0] {
            let fd = finite_diff_jvp(&net, &x, e, &d, h).unwrap();
            for (a, b) in fd.iter().zip(&exact) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn adjoint_consistency_all_layer_types() {
        for (spec, seed) in [
            (FeatNetSpec::default(), 21u64),
            (FeatNetSpec::softplus(&[5, 7]), 22),
            (FeatNetSpec::stack(&[2, 3, 4], Activation::Identity), 23),
        ] {
            let net = FeatNet::<f64>::init_random(spec, seed).unwrap();
            let e = Extent::new(32, 24);
            let x = lcg_image(e.pixels(), seed);
            let tape = net.linearize(&x, e).unwrap();
            let n_f = tape.feature_shape().len();
            for t in 0..4 {
                let v = lcg_vec(n_f, seed * 100 + t);
                let d = lcg_vec(e.pixels(), seed * 1000 + t);
                let lhs: f64 = v.iter().zip(tape.jvp(&d).unwrap()).map(|(a, b)| a * b).sum();
                let rhs: f64 = tape.vjp(&v).unwrap().iter().zip(&d).map(|(a, b)| a * b).sum();
                assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()), "{lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn softplus_vjp_matches_directional_fd() {
        let net = FeatNet::<f64>::init_random(FeatNetSpec::softplus(&[8, 16]), 31).unwrap();
        let e = Extent::new(16, 16);
        let x = lcg_image(256, 31);
        let tape = net.linearize(&x, e).unwrap();
        let v = lcg_vec(tape.feature_shape().len(), 32);
        let d = lcg_vec(256, 33);
        let g = tape.vjp(&v).unwrap();
        let fd = finite_diff_jvp(&net, &x, e, &d, 1e-3 * 255.0).unwrap();
        let lhs: f64 = v.iter().zip(&fd).map(|(a, b)| a * b).sum();
        let rhs: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-3 * rhs.abs());
    }

    #[test]
    fn counters_track_passes_and_macs() {
        let spec = FeatNetSpec::default();
        let net = FeatNet::<f64>::init_random(spec.clone(), 1).unwrap();
        let e = Extent::new(32, 48);
        let x = lcg_image(e.pixels(), 2);
        let before = net.op_counts();
        let tape = net.linearize(&x, e).unwrap();
        for _ in 0..3 {
            tape.vjp(&vec![1.0; tape.feature_shape().len()]).unwrap();
        }
        net.forward(&x, e).unwrap();
        let d = net.op_counts().since(&before);
        assert_eq!(d.forward_passes, 2);
        assert_eq!(d.backward_passes, 3);
        let analytic: u64 = spec.conv_macs(e).unwrap().iter().sum();
        assert_eq!(d.forward_macs, 2 * analytic);
        assert_eq!(d.derivative_macs, 3 * analytic);
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let spec = FeatNetSpec::default();
        let a = FeatNetWeights::<f64>::init_random(&spec, 7);
        let b = FeatNetWeights::<f64>::init_random(&spec, 7);
        let c = FeatNetWeights::<f64>::init_random(&spec, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let single = FeatNetWeights::<f32>::init_random(&spec, 7);
        for (p, q) in a.convs[0].kernel.iter().zip(&single.convs[0].kernel) {
            assert_eq!(*p, f64::from(*q));
        }
    }
}
