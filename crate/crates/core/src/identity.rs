//! Deterministic identity-embedding stand-in for a face recogniser, plus
//! cosine similarity, a quality proxy and greedy reference filtering.
//!
//! Features are computed on the patch-mean grid: a high-pass residual per
//! colour channel and a weaker low-pass grey level. A seeded Gaussian
//! projection, `tanh` and L2 normalisation give the 512-d embedding.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Array3, ArrayView3, Axis};
use rand_distr::{Distribution, StandardNormal};

use crate::codec::average_pool;
use crate::error::{Error, Result};
use crate::rng::{domain, substream};

pub const IDENTITY_DIM: usize = 512;
pub const PATCH: usize = 4;
pub const DEFAULT_TAU: f64 = 0.3;
pub const DEFAULT_Q_MIN: f64 = 0.1;
/// Relative weight of the low-pass grey features.
pub const LOW_PASS_WEIGHT: f32 = 0.35;
/// Pre-activation gain; pushes `tanh` toward saturation, which shrinks
/// chance correlations between unrelated images.
const TANH_GAIN: f32 = 4.0;

/// Unit-norm identity embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityEmbedding(Array1<f32>);

impl IdentityEmbedding {
    /// Normalises `v`; fails on zero or non-finite vectors.
    pub fn from_vector(v: Array1<f32>) -> Result<Self> {
        let norm = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Degenerate("cannot normalise a zero or non-finite embedding".into()));
        }
        Ok(Self(v.mapv(|x| (x as f64 / norm) as f32)))
    }

    pub fn as_array(&self) -> &Array1<f32> {
        &self.0
    }

    pub fn into_array(self) -> Array1<f32> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn cosine_similarity(a: &IdentityEmbedding, b: &IdentityEmbedding) -> f64 {
    dot(a.0.as_slice().unwrap(), b.0.as_slice().unwrap())
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityExtractor {
    seed: u64,
    height: usize,
    width: usize,
    projection: Array2<f32>,
    center: Array1<f32>,
    gain: f32,
}

impl IdentityExtractor {
    /// Uncalibrated extractor: high-pass features are centred at zero and
    /// grey levels at 0.5.
    pub fn new(seed: u64, height: usize, width: usize) -> Result<Self> {
        if height < 2 * PATCH || width < 2 * PATCH || height % PATCH != 0 || width % PATCH != 0 {
            return Err(Error::InvalidParameter(format!("identity extractor needs multiples of {PATCH}, got {height}x{width}")));
        }
        let cells = (height / PATCH) * (width / PATCH);
        let dim = 4 * cells;
        let projection = orthonormal_projection(seed, height, width, dim);
        let mut center = Array1::zeros(dim);
        center.slice_mut(ndarray::s![3 * cells..]).fill(0.5 * LOW_PASS_WEIGHT);
        Ok(Self { seed, height, width, projection, center, gain: 1.0 })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn feature_dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> (&Array1<f32>, f32) {
        (&self.center, self.gain)
    }

    /// Replaces the feature centre with the mean over `images` and rescales
    /// so centred features have unit RMS norm.
    pub fn calibrate(mut self, images: &[ArrayView3<f32>]) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptyInput("calibration images"));
        }
        let feats: Vec<Array1<f32>> = images.iter().map(|im| self.features(*im)).collect::<Result<_>>()?;
        let mut mean = Array1::<f64>::zeros(self.feature_dim());
        for f in &feats {
            mean.zip_mut_with(f, |m, &v| *m += v as f64);
        }
        mean /= feats.len() as f64;
        let ms = feats
            .iter()
            .map(|f| f.iter().zip(&mean).map(|(&v, &m)| (v as f64 - m).powi(2)).sum::<f64>())
            .sum::<f64>()
            / feats.len() as f64;
        if ms <= 0.0 {
            return Err(Error::Degenerate("calibration images have identical features".into()));
        }
        self.center = mean.mapv(|v| v as f32);
        self.gain = (1.0 / ms.sqrt()) as f32;
        Ok(self)
    }

    pub fn with_center(mut self, center: Array1<f32>, gain: f32) -> Result<Self> {
        if center.len() != self.feature_dim() {
            return Err(Error::shape("IdentityExtractor::with_center", &[self.feature_dim()], &[center.len()]));
        }
        self.center = center;
        self.gain = gain;
        Ok(self)
    }

    /// Patch-grid features: high-pass residual of each colour channel,
    /// then the weighted low-pass grey level.
    pub fn features(&self, image: ArrayView3<f32>) -> Result<Array1<f32>> {
        let (c, h, w) = image.dim();
        if c != 3 || h != self.height || w != self.width {
            return Err(Error::shape("identity features", &[3, self.height, self.width], &[c, h, w]));
        }
        if !image.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("image passed to the identity extractor".into()));
        }
        let grid = average_pool(image, PATCH);
        let low = box_blur(&grid);
        let cells = grid.len_of(Axis(1)) * grid.len_of(Axis(2));
        let mut out = Array1::zeros(4 * cells);
        for (i, (g, l)) in grid.iter().zip(low.iter()).enumerate() {
            out[i] = g - l;
        }
        let grey = low.mean_axis(Axis(0)).expect("three channels");
        for (i, v) in grey.iter().enumerate() {
            out[3 * cells + i] = LOW_PASS_WEIGHT * v;
        }
        Ok(out)
    }

    pub fn embed(&self, image: ArrayView3<f32>) -> Result<IdentityEmbedding> {
        let mut f = self.features(image)?;
        f -= &self.center;
        f *= self.gain * TANH_GAIN;
        let pre = self.projection.dot(&f);
        IdentityEmbedding::from_vector(pre.mapv(f32::tanh))
    }
}

/// Gaussian matrix with orthonormalised columns, scaled so each output has
/// unit variance for unit-norm input. Keeps feature-space angles intact.
fn orthonormal_projection(seed: u64, height: usize, width: usize, dim: usize) -> Array2<f32> {
    let mut rng = substream(seed, domain::IDENTITY, height as u64, width as u64);
    let rows = IDENTITY_DIM.max(dim);
    let g = DMatrix::<f64>::from_fn(rows, dim, |_, _| StandardNormal.sample(&mut rng));
    let q = g.qr().q();
    let scale = (IDENTITY_DIM as f64).sqrt();
    Array2::from_shape_fn((IDENTITY_DIM, dim), |(i, j)| (q[(i, j)] * scale) as f32)
}

/// Embeds with an uncalibrated extractor keyed by `extractor_seed`.
pub fn embed(image: ArrayView3<f32>, extractor_seed: u64) -> Result<IdentityEmbedding> {
    let (_, h, w) = image.dim();
    IdentityExtractor::new(extractor_seed, h, w)?.embed(image)
}

/// 5x5 box blur with edge clamping, per channel.
fn box_blur(grid: &Array3<f32>) -> Array3<f32> {
    let (c, h, w) = grid.dim();
    Array3::from_shape_fn((c, h, w), |(k, y, x)| {
        let mut s = 0.0;
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                s += grid[[k, yy, xx]];
            }
        }
        s / 25.0
    })
}

/// The two quality terms before combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityTerms {
    /// Standard deviation of the grey image.
    pub contrast: f64,
    /// RMS magnitude of forward-difference gradients.
    pub gradient: f64,
}

const CONTRAST_REF: f64 = 0.2;
const GRADIENT_REF: f64 = 0.08;

pub fn quality_terms(image: ArrayView3<f32>) -> QualityTerms {
    let grey = image.mean_axis(Axis(0)).expect("at least one channel").mapv(|v| v as f64);
    let n = grey.len() as f64;
    let mean = grey.sum() / n;
    let contrast = (grey.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let (h, w) = grey.dim();
    let mut energy = 0.0;
    let mut count = 0usize;
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                energy += (grey[[y, x + 1]] - grey[[y, x]]).powi(2);
                count += 1;
            }
            if y + 1 < h {
                energy += (grey[[y + 1, x]] - grey[[y, x]]).powi(2);
                count += 1;
            }
        }
    }
    let gradient = if count > 0 { (energy / count as f64).sqrt() } else { 0.0 };
    QualityTerms { contrast, gradient }
}

/// Equal mix of saturating contrast and gradient terms, in `[0, 1]`.
pub fn quality_score(image: ArrayView3<f32>) -> f64 {
    let q = quality_terms(image);
    let score = 0.5 * (q.contrast / CONTRAST_REF).min(1.0) + 0.5 * (q.gradient / GRADIENT_REF).min(1.0);
    if score.is_finite() {
        score.clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Greedy pass in input order; returns the indices of kept candidates.
pub fn filter_references(
    candidates: &[ArrayView3<f32>],
    tau: f64,
    q_min: f64,
    extractor: &IdentityExtractor,
) -> Result<Vec<usize>> {
    let embeddings = candidates.iter().map(|c| extractor.embed(*c)).collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = candidates.iter().map(|c| quality_score(*c)).collect();
    filter_embeddings(&embeddings, &scores, tau, q_min)
}

/// [`filter_references`] on precomputed embeddings and quality scores.
pub fn filter_embeddings(embeddings: &[IdentityEmbedding], scores: &[f64], tau: f64, q_min: f64) -> Result<Vec<usize>> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidParameter(format!("tau = {tau} outside (0, 1]")));
    }
    if embeddings.len() != scores.len() {
        return Err(Error::shape("filter_embeddings", &[embeddings.len()], &[scores.len()]));
    }
    let mut kept: Vec<usize> = Vec::new();
    for (i, e) in embeddings.iter().enumerate() {
        if scores[i] < q_min {
            continue;
        }
        if kept.iter().all(|&j| cosine_similarity(e, &embeddings[j]) < tau) {
            kept.push(i);
        }
    }
    Ok(kept)
}
