//! Identity-preserving synthetic face dataset pipeline.
//!
//! A conditional diffusion generator is driven by an identity embedding and
//! by a style embedding computed from parametric renderings. Styles are
//! drawn per subject from a Gaussian prior; guidance alternates between the
//! style and identity contexts around a shifting timestep. Procedural
//! stand-ins replace every pretrained component so each stage can be checked
//! against known ground truth.

pub mod codec;
pub mod datasets;
pub mod denoise;
pub mod error;
pub mod identity;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod schedule;
pub mod stylemodel;
pub mod stylesampler;
pub mod worldgen;

pub use error::{Error, Result};
