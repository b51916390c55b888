//! Noise estimators, classifier-free guidance with context blending, and
//! the ancestral sampler.

pub mod analytic;
pub mod cfg;
pub mod generator;
pub mod mlp;

use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::Array2;

use crate::error::Result;

pub use analytic::{analytic_eps, AnalyticGaussian};
pub use cfg::{cfg_eps, generate, BlendConfig, BlendMode, Trace};
pub use generator::{Generator, GeneratorShape, PreparedContexts, StepDraws, StepReport, TrainBatch};
pub use mlp::{time_embedding, Mlp, TIME_EMBED_DIM};

/// Which contexts are passed as given; `false` substitutes the learnable
/// empty embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Selection {
    pub id: bool,
    pub sty: bool,
}

impl Selection {
    pub const FULL: Self = Self { id: true, sty: true };
    pub const ID_EMPTY: Self = Self { id: false, sty: true };
    pub const STYLE_EMPTY: Self = Self { id: true, sty: false };
    pub const UNCONDITIONAL: Self = Self { id: false, sty: false };

    fn index(self) -> usize {
        (self.id as usize) << 1 | self.sty as usize
    }
}

/// A noise estimator evaluated on a batch of latents sharing one timestep.
pub trait Denoiser: Sync {
    /// Per-batch context state built once before the reverse loop.
    type Prepared: Sync;

    fn latent_dim(&self) -> usize;

    fn eps(&self, z_t: &Array2<f32>, t: usize, sel: Selection, prepared: &Self::Prepared) -> Result<Array2<f32>>;
}

/// Wraps a denoiser and counts batch evaluations per context selection.
#[derive(Debug, Default)]
pub struct Counting<D> {
    pub inner: D,
    calls: [AtomicUsize; 4],
}

impl<D> Counting<D> {
    pub fn new(inner: D) -> Self {
        Self {
            inner,
            calls: Default::default(),
        }
    }

    pub fn calls(&self, sel: Selection) -> usize {
        self.calls[sel.index()].load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        for c in &self.calls {
            c.store(0, Ordering::Relaxed);
        }
    }
}

impl<D: Denoiser> Denoiser for Counting<D> {
    type Prepared = D::Prepared;

    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    fn eps(&self, z_t: &Array2<f32>, t: usize, sel: Selection, prepared: &Self::Prepared) -> Result<Array2<f32>> {
        self.calls[sel.index()].fetch_add(1, Ordering::Relaxed);
        self.inner.eps(z_t, t, sel, prepared)
    }
}
