//! Exact noise prediction for Gaussian data `z0 ~ N(m, C)`.

use ndarray::{Array1, Array2};
use nalgebra::{DMatrix, SymmetricEigen};

use super::{Denoiser, Selection};
use crate::error::{Error, Result};
use crate::schedule::DiffusionSchedule;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticGaussian {
    mean: Array1<f64>,
    eigenvalues: Array1<f64>,
    /// Columns are eigenvectors of the covariance.
    eigenvectors: Array2<f64>,
    schedule: DiffusionSchedule,
}

impl AnalyticGaussian {
    pub fn new(mean: Array1<f64>, covariance: Array2<f64>, schedule: DiffusionSchedule) -> Result<Self> {
        let d = mean.len();
        if covariance.dim() != (d, d) {
            return Err(Error::shape("AnalyticGaussian::new", &[d, d], covariance.shape()));
        }
        let m = DMatrix::from_fn(d, d, |i, j| 0.5 * (covariance[[i, j]] + covariance[[j, i]]));
        let eig = SymmetricEigen::new(m);
        let eigenvalues = Array1::from_shape_fn(d, |k| eig.eigenvalues[k].max(0.0));
        let eigenvectors = Array2::from_shape_fn((d, d), |(i, k)| eig.eigenvectors[(i, k)]);
        Ok(Self { mean, eigenvalues, eigenvectors, schedule })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(z_t - sqrt(abar) E[z0 | z_t]) / sqrt(1 - abar)` for one latent.
    pub fn eps_row(&self, z_t: &[f64], t: usize) -> Result<Array1<f64>> {
        self.schedule.check(t)?;
        if z_t.len() != self.dim() {
            return Err(Error::shape("analytic_eps", &[self.dim()], &[z_t.len()]));
        }
        let ab = self.schedule.alpha_bar(t);
        let (sa, s1) = (ab.sqrt(), (1.0 - ab).sqrt());
        let resid = Array1::from_shape_fn(self.dim(), |i| z_t[i] - sa * self.mean[i]);
        // C (abar C + (1 - abar) I)^-1 in the eigenbasis.
        let mut coords = self.eigenvectors.t().dot(&resid);
        for (c, &lam) in coords.iter_mut().zip(&self.eigenvalues) {
            *c *= lam / (ab * lam + 1.0 - ab);
        }
        let shrunk = self.eigenvectors.dot(&coords);
        Ok(Array1::from_shape_fn(self.dim(), |i| {
            let posterior_mean = self.mean[i] + sa * shrunk[i];
            (z_t[i] - sa * posterior_mean) / s1
        }))
    }
}

pub fn analytic_eps(denoiser: &AnalyticGaussian, z_t: &[f64], t: usize) -> Result<Array1<f64>> {
    denoiser.eps_row(z_t, t)
}

impl Denoiser for AnalyticGaussian {
    type Prepared = ();

    fn latent_dim(&self) -> usize {
        self.dim()
    }

    fn eps(&self, z_t: &Array2<f32>, t: usize, _sel: Selection, _prepared: &()) -> Result<Array2<f32>> {
        let mut out = Array2::zeros(z_t.dim());
        let mut row = vec![0.0; self.dim()];
        for (i, z) in z_t.rows().into_iter().enumerate() {
            for (r, &v) in row.iter_mut().zip(z) {
                *r = v as f64;
            }
            let e = self.eps_row(&row, t)?;
            out.row_mut(i).assign(&e.mapv(|v| v as f32));
        }
        Ok(out)
    }
}
