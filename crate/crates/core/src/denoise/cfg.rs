//! Guidance with a time-varying unconditional branch, and the reverse
//! sampling loop.
//!
//! `eps_cfg = (1 + w) eps(c_id, c_sty) - w eps_t`. Under blending the
//! branch drops the style context above the shifting timestep `t0` and the
//! identity context at or below it.

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Denoiser, Selection};
use crate::error::{Error, Result};
use crate::rng::{Stream, StreamKey};
use crate::schedule::DiffusionSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendMode {
    NoBlending,
    IdentityOnly,
    StyleOnly,
    Blending,
}

impl BlendMode {
    pub const ALL: [BlendMode; 4] = [BlendMode::NoBlending, BlendMode::IdentityOnly, BlendMode::StyleOnly, BlendMode::Blending];

    pub fn name(self) -> &'static str {
        match self {
            BlendMode::NoBlending => "no_blending",
            BlendMode::IdentityOnly => "identity_only",
            BlendMode::StyleOnly => "style_only",
            BlendMode::Blending => "blending",
        }
    }
}

impl std::str::FromStr for BlendMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        BlendMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown blend mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlendConfig {
    pub mode: BlendMode,
    pub t0: usize,
    pub w: f64,
}

impl Default for BlendConfig {
    fn default() -> Self {
        Self {
            mode: BlendMode::Blending,
            t0: 500,
            w: 0.5,
        }
    }
}

impl BlendConfig {
    pub fn validate(&self, steps: usize) -> Result<()> {
        if self.t0 > steps {
            return Err(Error::InvalidParameter(format!("t0 = {} exceeds T = {steps}", self.t0)));
        }
        if !(self.w >= 0.0 && self.w.is_finite()) {
            return Err(Error::InvalidParameter(format!("w = {} must be a finite nonnegative number", self.w)));
        }
        Ok(())
    }

    /// The unconditional branch used at `t`, if any.
    pub fn branch(&self, t: usize) -> Option<Selection> {
        let late = t <= self.t0;
        match self.mode {
            BlendMode::NoBlending => None,
            BlendMode::IdentityOnly => late.then_some(Selection::ID_EMPTY),
            BlendMode::StyleOnly => (!late).then_some(Selection::STYLE_EMPTY),
            BlendMode::Blending => Some(if late { Selection::ID_EMPTY } else { Selection::STYLE_EMPTY }),
        }
    }
}

/// Guided prediction at `t`; also reports the branch that was evaluated.
pub fn cfg_eps<D: Denoiser>(
    denoiser: &D,
    z_t: &Array2<f32>,
    t: usize,
    blend: &BlendConfig,
    prepared: &D::Prepared,
) -> Result<(Array2<f32>, Option<Selection>)> {
    let cond = denoiser.eps(z_t, t, Selection::FULL, prepared)?;
    if blend.w == 0.0 {
        return Ok((cond, None));
    }
    let Some(sel) = blend.branch(t) else {
        return Ok((cond, None));
    };
    let other = denoiser.eps(z_t, t, sel, prepared)?;
    Ok((combine(&cond, &other, blend.w), Some(sel)))
}

pub(crate) fn combine(cond: &Array2<f32>, other: &Array2<f32>, w: f64) -> Array2<f32> {
    let mut out = cond.clone();
    ndarray::Zip::from(&mut out).and(other).for_each(|c, &u| {
        *c = ((1.0 + w) * *c as f64 - w * u as f64) as f32;
    });
    out
}

/// Branch evaluations over one reverse trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    /// Steps that evaluated the style-empty branch.
    pub style_branch: usize,
    /// Steps that evaluated the identity-empty branch.
    pub identity_branch: usize,
    /// Steps that used the conditional prediction alone.
    pub conditional_only: usize,
}

/// Ancestral sampling from `z_T ~ N(0, I)` down to `z_0`, one row per key.
/// Each row draws its initial latent and per-step noise from its own
/// stream, so results do not depend on how rows are batched.
pub fn generate<D: Denoiser>(
    denoiser: &D,
    schedule: &DiffusionSchedule,
    prepared: &D::Prepared,
    blend: &BlendConfig,
    keys: &[StreamKey],
) -> Result<(Array2<f32>, Trace)> {
    blend.validate(schedule.steps())?;
    let d = denoiser.latent_dim();
    let mut streams: Vec<Stream> = keys.iter().map(|k| k.stream()).collect();
    let mut z = Array2::zeros((keys.len(), d));
    for (mut row, rng) in z.rows_mut().into_iter().zip(streams.iter_mut()) {
        row.iter_mut().for_each(|v| *v = normal(rng));
    }
    let mut trace = Trace::default();
    let mut noise = Array2::zeros((keys.len(), d));
    for t in (1..=schedule.steps()).rev() {
        let (eps, branch) = cfg_eps(denoiser, &z, t, blend, prepared)?;
        match branch {
            Some(s) if s == Selection::STYLE_EMPTY => trace.style_branch += 1,
            Some(_) => trace.identity_branch += 1,
            None => trace.conditional_only += 1,
        }
        if t > 1 {
            for (mut row, rng) in noise.rows_mut().into_iter().zip(streams.iter_mut()) {
                row.iter_mut().for_each(|v| *v = normal(rng));
            }
        }
        let c = schedule.reverse_coefficients(t);
        ndarray::Zip::from(&mut z).and(&eps).and(&noise).for_each(|zv, &e, &n| {
            *zv = c.apply(*zv, e, n);
        });
        if let Some(pos) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "latent entry {} (row {}) became {} at timestep {t}",
                pos % d.max(1),
                pos / d.max(1),
                z.iter().nth(pos).unwrap()
            )));
        }
    }
    Ok((z, trace))
}

fn normal(rng: &mut Stream) -> f32 {
    let v: f64 = StandardNormal.sample(rng);
    v as f32
}
