//! Gaussian style prior and class-wise style sampling.
//!
//! A class draws its own mean from `N(mu, rho * Sigma)` and samples images
//! from `N(mu_i, (1 - rho) * Sigma)`, so the equal-weight mixture over
//! classes keeps the prior's first two moments.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stylemodel::attributes::SHAPE_DIM;
use crate::stylemodel::{StyleAttributes, STYLE_DIM};

/// Blend weight toward the diagonal when the fit is underdetermined.
pub const SHRINKAGE: f64 = 0.05;
/// Floor on the diagonal used by the shrinkage target.
pub const VARIANCE_FLOOR: f64 = 1e-6;
/// Below this many rows the sample covariance is shrunk.
pub const SHRINKAGE_ROWS: usize = 5 * STYLE_DIM;

#[derive(Debug, Clone, PartialEq)]
pub struct StylePrior {
    mu: Array1<f64>,
    sigma: Array2<f64>,
    /// `L` with `L L^T = sigma`, columns scaled eigenvectors.
    factor: Arc<Array2<f64>>,
}

impl StylePrior {
    pub fn new(mu: Array1<f64>, sigma: Array2<f64>) -> Result<Self> {
        let d = mu.len();
        if sigma.dim() != (d, d) {
            return Err(Error::shape("StylePrior::new", &[d, d], sigma.shape()));
        }
        if !mu.iter().chain(sigma.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("style prior parameters".into()));
        }
        let factor = Arc::new(psd_factor(&sigma));
        Ok(Self { mu, sigma, factor })
    }

    pub fn from_factor(mu: Array1<f64>, factor: Array2<f64>) -> Result<Self> {
        let sigma = factor.dot(&factor.t());
        let d = mu.len();
        if factor.nrows() != d {
            return Err(Error::shape("StylePrior::from_factor", &[d, factor.ncols()], factor.shape()));
        }
        Ok(Self { mu, sigma, factor: Arc::new(factor) })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &Array1<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &Array2<f64> {
        &self.sigma
    }

    pub fn factor(&self) -> &Array2<f64> {
        &self.factor
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Array1<f64> {
        &self.mu + &correlated(&self.factor, 1.0, rng)
    }
}

/// Symmetric eigendecomposition with negative eigenvalues clipped to zero.
fn psd_factor(sigma: &Array2<f64>) -> Array2<f64> {
    let d = sigma.nrows();
    let m = DMatrix::from_fn(d, d, |i, j| 0.5 * (sigma[[i, j]] + sigma[[j, i]]));
    let eig = SymmetricEigen::new(m);
    Array2::from_shape_fn((d, d), |(i, k)| eig.eigenvectors[(i, k)] * eig.eigenvalues[k].max(0.0).sqrt())
}

fn correlated<R: Rng>(factor: &Array2<f64>, scale: f64, rng: &mut R) -> Array1<f64> {
    let z: Array1<f64> = Array1::from_shape_simple_fn(factor.ncols(), || rng.sample(StandardNormal));
    let mut x = factor.dot(&z);
    x *= scale;
    x
}

/// Fits the prior to the rows of `p`.
pub fn fit_prior(p: ArrayView2<f64>) -> Result<StylePrior> {
    let n = p.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("fit_prior needs at least one row"));
    }
    if !p.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("fit_prior input".into()));
    }
    let mu = p.mean_axis(Axis(0)).expect("nonempty");
    let centered = &p - &mu.view().insert_axis(Axis(0));
    let mut sigma = if n > 1 {
        centered.t().dot(&centered) / (n - 1) as f64
    } else {
        Array2::zeros((p.ncols(), p.ncols()))
    };
    if n < SHRINKAGE_ROWS {
        let d = sigma.nrows();
        let diag: Vec<f64> = (0..d).map(|i| sigma[[i, i]].max(VARIANCE_FLOOR)).collect();
        sigma *= 1.0 - SHRINKAGE;
        for (i, v) in diag.into_iter().enumerate() {
            sigma[[i, i]] += SHRINKAGE * v;
        }
    }
    StylePrior::new(mu, sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum SamplingStrategy {
    Uncontrolled,
    Replicated,
    Uniform,
    SubjectAware { rho: f64 },
}

impl SamplingStrategy {
    pub const DEFAULT_RHO: f64 = 0.5;

    pub fn validate(&self) -> Result<()> {
        match *self {
            SamplingStrategy::SubjectAware { rho } if !(0.0..=1.0).contains(&rho) => {
                Err(Error::InvalidParameter(format!("rho = {rho} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SamplingStrategy::Uncontrolled => "uncontrolled",
            SamplingStrategy::Replicated => "replicated",
            SamplingStrategy::Uniform => "uniform",
            SamplingStrategy::SubjectAware { .. } => "subject_aware",
        }
    }
}

impl fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplingStrategy::SubjectAware { rho } => write!(f, "subject_aware({rho})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for SamplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        let parsed = match s.as_str() {
            "uncontrolled" => SamplingStrategy::Uncontrolled,
            "replicated" => SamplingStrategy::Replicated,
            "uniform" => SamplingStrategy::Uniform,
            "subject_aware" | "subjectaware" => SamplingStrategy::SubjectAware { rho: Self::DEFAULT_RHO },
            other => {
                let rho = other
                    .strip_prefix("subject_aware(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|r| r.parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))?;
                SamplingStrategy::SubjectAware { rho }
            }
        };
        parsed.validate()?;
        Ok(parsed)
    }
}

/// Per-class style distribution `N(mu_i, scale^2 * L L^T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStyle {
    pub class_id: u64,
    pub mu: Array1<f64>,
    factor: Option<Arc<Array2<f64>>>,
    scale: f64,
    pub gamma: f64,
}

impl ClassStyle {
    /// Every image of the class reuses `reference` exactly.
    pub fn replicated(class_id: u64, reference: &StyleAttributes, n_classes: usize) -> Self {
        Self {
            class_id,
            mu: Array1::from(reference.as_slice().to_vec()),
            factor: None,
            scale: 0.0,
            gamma: 1.0 / n_classes.max(1) as f64,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.factor.is_none() || self.scale == 0.0
    }

    /// Within-class covariance `Sigma_i`.
    pub fn covariance(&self) -> Array2<f64> {
        let d = self.mu.len();
        match &self.factor {
            Some(l) if self.scale != 0.0 => l.dot(&l.t()) * (self.scale * self.scale),
            _ => Array2::zeros((d, d)),
        }
    }
}

/// Draws the class-wise distribution for `SubjectAware` and `Uniform`.
pub fn sample_class<R: Rng>(
    prior: &StylePrior,
    strategy: SamplingStrategy,
    class_id: u64,
    n_classes: usize,
    rng: &mut R,
) -> Result<ClassStyle> {
    strategy.validate()?;
    let gamma = 1.0 / n_classes.max(1) as f64;
    let (mu, scale) = match strategy {
        SamplingStrategy::Uniform => (prior.mu.clone(), 1.0),
        SamplingStrategy::SubjectAware { rho } => {
            let mut mu = correlated(&prior.factor, rho.sqrt(), rng);
            mu += &prior.mu;
            (mu, (1.0 - rho).sqrt())
        }
        other => {
            return Err(Error::InvalidParameter(format!("{other} does not define a class distribution")));
        }
    };
    Ok(ClassStyle {
        class_id,
        mu,
        factor: Some(Arc::clone(&prior.factor)),
        scale,
        gamma,
    })
}

pub fn sample_attributes<R: Rng>(class: &ClassStyle, rng: &mut R) -> StyleAttributes {
    let values = match &class.factor {
        Some(l) if class.scale != 0.0 => &class.mu + &correlated(l, class.scale, rng),
        _ => class.mu.clone(),
    };
    StyleAttributes::from_vec(values.to_vec()).expect("prior dimension is STYLE_DIM")
}

/// Overwrites the shape block of the class mean.
pub fn apply_shape_replacement(class: &ClassStyle, reference_shape: &[f64]) -> Result<ClassStyle> {
    if reference_shape.len() != SHAPE_DIM {
        return Err(Error::shape("apply_shape_replacement", &[SHAPE_DIM], &[reference_shape.len()]));
    }
    let mut out = class.clone();
    out.mu
        .slice_mut(ndarray::s![..SHAPE_DIM])
        .assign(&ndarray::ArrayView1::from(reference_shape));
    Ok(out)
}
