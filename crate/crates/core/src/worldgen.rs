//! Procedural ground-truth corpus: a known style prior, subjects drawn
//! with the class-wise sampler, and per-subject albedo detail that carries
//! identity.

use ndarray::{s, Array1, Array2, Array3, Array4};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{domain, substream, StreamKey};
use crate::stylemodel::attributes::{EXPRESSION_DIM, SHAPE_DIM, SH_TERMS, TEXTURE_DIM};
use crate::stylemodel::basis::canonical;
use crate::stylemodel::{render_detailed, Block, StyleAttributes, StyleBasis, STYLE_DIM};
use crate::stylesampler::{sample_attributes, sample_class, SamplingStrategy, StylePrior};

pub const DEFAULT_TRUE_RHO: f64 = 0.5;
pub const DEFAULT_OVERLAY_AMPLITUDE: f64 = 0.12;
/// Angular frequency band of the identity detail, in radians per
/// canonical unit (the image spans two units).
const OVERLAY_BAND: (f64, f64) = (5.0, 11.0);
const OVERLAY_WAVES: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub seed: u64,
    pub n_subjects: usize,
    pub images_per_subject: usize,
    pub prior: StylePrior,
    pub true_rho: f64,
    pub overlay_amplitude: f64,
}

impl WorldSpec {
    /// World with the built-in prior derived from `seed`.
    pub fn standard(seed: u64, n_subjects: usize, images_per_subject: usize) -> Self {
        Self {
            seed,
            n_subjects,
            images_per_subject,
            prior: true_prior(seed),
            true_rho: DEFAULT_TRUE_RHO,
            overlay_amplitude: DEFAULT_OVERLAY_AMPLITUDE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.images_per_subject == 0 {
            return Err(Error::InvalidParameter("world needs at least one subject and one image".into()));
        }
        if !(0.0..=1.0).contains(&self.true_rho) {
            return Err(Error::InvalidParameter(format!("true_rho = {} outside [0, 1]", self.true_rho)));
        }
        if self.prior.dim() != STYLE_DIM {
            return Err(Error::shape("world prior", &[STYLE_DIM], &[self.prior.dim()]));
        }
        Ok(())
    }
}

/// Ground-truth prior: decaying spectra within the geometry and texture
/// blocks (random orthogonal mixing), independent pose terms, and white
/// light with a small per-channel tint.
pub fn true_prior(seed: u64) -> StylePrior {
    let mut rng = substream(seed, domain::WORLD_PRIOR, 0, 0);
    let mut mu = Array1::zeros(STYLE_DIM);
    let mut factor = Array2::zeros((STYLE_DIM, STYLE_DIM));

    let decaying = |lead: f64, n: usize| -> Vec<f64> { (0..n).map(|k| lead / (1.0 + 2.0 * k as f64)).collect() };
    for (block, lead, n) in [
        (Block::Shape, 0.5, SHAPE_DIM),
        (Block::Expression, 0.3, EXPRESSION_DIM),
        (Block::Texture, 0.15, TEXTURE_DIM),
    ] {
        let q = random_orthogonal(n, &mut rng);
        let sd = decaying(lead, n);
        let o = block.range().start;
        for i in 0..n {
            for k in 0..n {
                factor[[o + i, o + k]] = q[[i, k]] * sd[k];
            }
        }
    }

    let pose = Block::Pose.range().start;
    for (i, sd) in [0.3, 0.15, 0.08, 0.05, 0.04, 0.04, 0.0, 0.0, 0.0].into_iter().enumerate() {
        factor[[pose + i, pose + i]] = sd;
    }

    // Illumination: index 3 * k + c. Column 3 * k carries the shared white
    // component of term k, columns 3 * k + 1, 3 * k + 2 a per-channel tint.
    let light = Block::Illumination.range().start;
    let mean_terms = [0.8, -0.1, 0.25, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    for k in 0..SH_TERMS {
        let shared = if k < 4 { 0.12 } else { 0.05 };
        let q = random_orthogonal(3, &mut rng);
        for c in 0..3 {
            let row = light + 3 * k + c;
            mu[row] = mean_terms[k];
            factor[[row, light + 3 * k]] = shared;
            for j in 1..3 {
                factor[[row, light + 3 * k + j]] = 0.2 * shared * q[[c, j]];
            }
        }
    }
    StylePrior::from_factor(mu, factor).expect("square factor")
}

fn random_orthogonal<R: Rng>(n: usize, rng: &mut R) -> Array2<f64> {
    let g = nalgebra::DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let q = g.qr().q();
    Array2::from_shape_fn((n, n), |(i, j)| q[(i, j)])
}

/// Per-subject band-limited colour detail on the canonical surface grid,
/// channel-major `(3, H, W)`.
pub fn identity_overlay(seed: u64, subject: u64, height: usize, width: usize, amplitude: f64) -> Vec<f64> {
    let mut rng = substream(seed, domain::WORLD_OVERLAY, subject, 0);
    let mut field = vec![0.0; 3 * height * width];
    // A shared luminance pattern plus a weaker independent one per channel.
    let mut add_waves = |rng: &mut crate::rng::Stream, channels: &[usize], gain: f64| {
        for _ in 0..OVERLAY_WAVES {
            let omega = rng.random_range(OVERLAY_BAND.0..OVERLAY_BAND.1);
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let (ku, kv) = (omega * theta.cos(), omega * theta.sin());
            let a = gain * amplitude * (2.0 / OVERLAY_WAVES as f64).sqrt();
            for y in 0..height {
                let v = canonical(y as f64, height);
                for x in 0..width {
                    let u = canonical(x as f64, width);
                    let val = a * (ku * u + kv * v + phase).cos();
                    for &c in channels {
                        field[c * height * width + y * width + x] += val;
                    }
                }
            }
        }
    };
    add_waves(&mut rng, &[0, 1, 2], 1.0);
    for c in 0..3 {
        add_waves(&mut rng, &[c], 0.5);
    }
    field
}

#[derive(Debug, Clone)]
pub struct World {
    /// `(N, 3, H, W)` images in `[0, 1]`.
    pub images: Array4<f32>,
    pub attributes: Vec<StyleAttributes>,
    pub labels: Vec<u64>,
    pub keys: Vec<StreamKey>,
    /// Ground-truth class means, one row per subject.
    pub subject_means: Array2<f64>,
}

impl World {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn attribute_matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.len(), STYLE_DIM));
        for (mut row, a) in m.rows_mut().into_iter().zip(&self.attributes) {
            row.assign(&ndarray::ArrayView1::from(a.as_slice()));
        }
        m
    }
}

/// Renders one image: conditioning geometry and lighting from `p`, albedo
/// perturbed by the subject's identity detail.
pub fn render_image(basis: &StyleBasis, p: &StyleAttributes, overlay: &[f64]) -> Array3<f32> {
    render_detailed(basis, p, Some(overlay)).0.lambertian
}

pub fn generate_world(spec: &WorldSpec, basis: &StyleBasis) -> Result<World> {
    spec.validate()?;
    let (m, n) = (spec.n_subjects, spec.images_per_subject);
    let strategy = SamplingStrategy::SubjectAware { rho: spec.true_rho };
    let classes = (0..m as u64)
        .map(|c| {
            let mut rng = substream(spec.seed, domain::WORLD_SUBJECT, c, 0);
            sample_class(&spec.prior, strategy, c, m, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let overlays: Vec<Vec<f64>> = (0..m as u64)
        .into_par_iter()
        .map(|c| identity_overlay(spec.seed, c, basis.height, basis.width, spec.overlay_amplitude))
        .collect();

    let items: Vec<(u64, u64)> = (0..m as u64).flat_map(|c| (0..n as u64).map(move |j| (c, j))).collect();
    let rendered: Vec<(StyleAttributes, Array3<f32>, StreamKey)> = items
        .par_iter()
        .map(|&(c, j)| {
            let key = StreamKey::new(spec.seed, domain::WORLD_IMAGE, c, j);
            let p = sample_attributes(&classes[c as usize], &mut key.stream());
            let img = render_image(basis, &p, &overlays[c as usize]);
            (p, img, key)
        })
        .collect();

    let (h, w) = (basis.height, basis.width);
    let mut images = Array4::zeros((items.len(), 3, h, w));
    let mut attributes = Vec::with_capacity(items.len());
    let mut keys = Vec::with_capacity(items.len());
    for (i, (p, img, key)) in rendered.into_iter().enumerate() {
        images.slice_mut(s![i, .., .., ..]).assign(&img);
        attributes.push(p);
        keys.push(key);
    }
    let mut subject_means = Array2::zeros((m, STYLE_DIM));
    for (mut row, c) in subject_means.rows_mut().into_iter().zip(&classes) {
        row.assign(&c.mu);
    }
    Ok(World {
        images,
        attributes,
        labels: items.iter().map(|&(c, _)| c).collect(),
        keys,
        subject_means,
    })
}
