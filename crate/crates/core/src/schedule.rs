//! Linear variance schedule and the closed-form forward/reverse transitions.
//!
//! Timesteps are 1-indexed: `t = 0` is the clean latent and `t = T` is the
//! noisiest level. Coefficients are kept in `f64`; the transitions accept
//! `f32` or `f64` tensors and compute in `f64` either way.

use ndarray::{Array, ArrayView, Dimension, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    #[serde(rename = "T")]
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::linear(self.steps, self.beta_start, self.beta_end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl DiffusionSchedule {
    /// `beta` interpolated linearly from `beta_start` at `t = 1` to `beta_end`
    /// at `t = T`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidParameter(format!("schedule needs T >= 2, got {steps}")));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start}..{beta_end}"
            )));
        }
        let span = (steps - 1) as f64;
        let beta: Vec<f64> = (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * (i as f64) / span)
            .collect();
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        Ok(Self { beta, alpha, alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn check(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            Err(Error::TimestepOutOfRange { t, max: self.steps() })
        } else {
            Ok(())
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// `z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps`.
    pub fn forward_sample<A: Scalar, D: Dimension>(
        &self,
        z0: ArrayView<A, D>,
        t: usize,
        eps: ArrayView<A, D>,
    ) -> Result<Array<A, D>> {
        self.check(t)?;
        if z0.shape() != eps.shape() {
            return Err(Error::shape("forward_sample", z0.shape(), eps.shape()));
        }
        let ab = self.alpha_bar(t);
        Ok(forward_with(ab, z0, eps))
    }

    /// One ancestral step `z_t -> z_{t-1}`. At `t = 1` the fresh noise is
    /// ignored, so the last step is deterministic.
    pub fn reverse_step<A: Scalar, D: Dimension>(
        &self,
        z_t: ArrayView<A, D>,
        t: usize,
        eps_hat: ArrayView<A, D>,
        fresh_noise: ArrayView<A, D>,
    ) -> Result<Array<A, D>> {
        self.check(t)?;
        if z_t.shape() != eps_hat.shape() {
            return Err(Error::shape("reverse_step", z_t.shape(), eps_hat.shape()));
        }
        if z_t.shape() != fresh_noise.shape() {
            return Err(Error::shape("reverse_step", z_t.shape(), fresh_noise.shape()));
        }
        let coeffs = self.reverse_coefficients(t);
        let mut out = Array::zeros(z_t.raw_dim());
        Zip::from(&mut out)
            .and(&z_t)
            .and(&eps_hat)
            .and(&fresh_noise)
            .for_each(|o, &z, &e, &n| *o = A::of(coeffs.apply_f64(z.to_f64(), e.to_f64(), n.to_f64())));
        Ok(out)
    }

    pub(crate) fn reverse_coefficients(&self, t: usize) -> ReverseCoefficients {
        let a = self.alpha(t);
        let ab = self.alpha_bar(t);
        ReverseCoefficients {
            inv_sqrt_alpha: 1.0 / a.sqrt(),
            eps_scale: (1.0 - a) / (1.0 - ab).sqrt(),
            noise_scale: if t == 1 { 0.0 } else { (1.0 - a).sqrt() },
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ReverseCoefficients {
    inv_sqrt_alpha: f64,
    eps_scale: f64,
    noise_scale: f64,
}

impl ReverseCoefficients {
    #[inline]
    pub(crate) fn apply_f64(&self, z: f64, eps_hat: f64, noise: f64) -> f64 {
        self.inv_sqrt_alpha * (z - self.eps_scale * eps_hat) + self.noise_scale * noise
    }

    #[inline]
    pub(crate) fn apply(&self, z: f32, eps_hat: f32, noise: f32) -> f32 {
        self.apply_f64(z as f64, eps_hat as f64, noise as f64) as f32
    }
}

pub(crate) fn forward_with<A: Scalar, D: Dimension>(alpha_bar: f64, z0: ArrayView<A, D>, eps: ArrayView<A, D>) -> Array<A, D> {
    let a = alpha_bar.sqrt();
    let s = (1.0 - alpha_bar).sqrt();
    let mut out = Array::zeros(z0.raw_dim());
    Zip::from(&mut out)
        .and(&z0)
        .and(&eps)
        .for_each(|o, &z, &e| *o = A::of(a * z.to_f64() + s * e.to_f64()));
    out
}
