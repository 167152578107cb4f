//! Feature-preserving rate-distortion optimization for a simple intra codec.
//!
//! The encoder chooses, per 16x16 macroblock, between one 16x16 DCT and
//! sixteen 4x4 DCTs. Besides plain SSE it can rank candidates by the
//! distortion they induce in the features of a differentiable extractor,
//! using a sketched Jacobian `S J_f(x)` computed once per image.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which the CLI and the acceptance suite use.

pub mod codec;
pub mod error;
pub mod eval;
pub mod featnet;
pub mod image;
pub mod jacobian;
pub mod rdo;
pub mod scalar;
pub mod sketch;

pub use error::{Error, Result};
pub use image::{mse, psnr, BlockGrid, ImagePlane};
pub use scalar::Real;

/// Default scalar type.
pub type F64 = f64;

pub type FeatNet64 = featnet::FeatNet<f64>;
pub type FeatNet32 = featnet::FeatNet<f32>;
pub type FeatNetWeights64 = featnet::FeatNetWeights<f64>;
pub type SketchMatrix64 = sketch::SketchMatrix<f64>;
pub type SketchMatrix32 = sketch::SketchMatrix<f32>;
pub type SketchedJacobian64 = jacobian::SketchedJacobian<f64>;
pub type SketchedJacobian32 = jacobian::SketchedJacobian<f32>;
pub type Transforms64 = codec::Transforms<f64>;
