//! Procedural face-proxy bases: a mirror-symmetric base heightfield plus
//! smooth linear displacement and colour fields, all fixed by a seed.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::attributes::{EXPRESSION_DIM, SHAPE_DIM, TEXTURE_DIM};
use crate::error::{Error, Result};
use crate::rng::{domain, substream};

/// Semi-axes of the elliptical face region in canonical coordinates.
pub const FACE_SEMI_U: f64 = 0.72;
pub const FACE_SEMI_V: f64 = 0.88;

const BASE_DEPTH: f64 = 0.45;
const SHAPE_AMPLITUDE: f64 = 0.05;
const EXPRESSION_AMPLITUDE: f64 = 0.035;
const TEXTURE_AMPLITUDE: f64 = 0.04;
const BASE_COLOR: [f64; 3] = [0.78, 0.62, 0.52];

#[derive(Debug, Clone, PartialEq)]
pub struct StyleBasis {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    /// Base heightfield, row-major `(height, width)`.
    pub base_mesh: Array1<f64>,
    /// `(SHAPE_DIM, height * width)` displacement fields.
    pub shape: Array2<f64>,
    /// `(EXPRESSION_DIM, height * width)` displacement fields.
    pub expression: Array2<f64>,
    /// `(TEXTURE_DIM, 3 * height * width)` colour fields, channel-major.
    pub texture: Array2<f64>,
    /// Base albedo, `3 * height * width`, channel-major.
    pub base_color: Array1<f64>,
}

/// Canonical coordinate of pixel column `x` (or row `y`): maps `0..n-1`
/// onto `[-1, 1]` so that `x` and `n - 1 - x` are mirror images.
#[inline]
pub fn canonical(index: f64, n: usize) -> f64 {
    let c = (n as f64 - 1.0) / 2.0;
    (index - c) / c
}

#[inline]
pub fn inside_face(u: f64, v: f64) -> bool {
    (u / FACE_SEMI_U).powi(2) + (v / FACE_SEMI_V).powi(2) <= 1.0
}

fn base_height(u: f64, v: f64) -> f64 {
    let r2 = (u / FACE_SEMI_U).powi(2) + (v / FACE_SEMI_V).powi(2);
    let dome = if r2 < 1.0 { BASE_DEPTH * (1.0 - r2).powf(1.5) } else { 0.0 };
    let nose = 0.12 * (-(u * u) / 0.012 - (v - 0.05).powi(2) / 0.05).exp();
    let brow = 0.04 * (-(v + 0.32).powi(2) / 0.01).exp() * (-(u * u) / 0.25).exp();
    let sockets = -0.05 * ((-((u - 0.3).powi(2) + (v + 0.2).powi(2)) / 0.012).exp() + (-((u + 0.3).powi(2) + (v + 0.2).powi(2)) / 0.012).exp());
    let mouth = -0.025 * (-(u * u) / 0.05 - (v - 0.45).powi(2) / 0.004).exp();
    dome + nose + brow + sockets + mouth
}

/// Smooth band-limited random field; even in `u` when `symmetric`.
struct SmoothField {
    terms: Vec<(f64, f64, f64, f64, bool)>,
}

impl SmoothField {
    fn random<R: Rng>(rng: &mut R, symmetric: bool) -> Self {
        let terms = (0..5)
            .map(|_| {
                let fu = rng.random_range(0..3) as f64 * 0.5 + if symmetric { 0.0 } else { 0.25 };
                let fv = rng.random_range(0.25..1.5);
                let phase = rng.random_range(0.0..2.0 * PI);
                let amp: f64 = StandardNormal.sample(rng);
                let odd = !symmetric && rng.random_bool(0.5);
                (fu, fv, phase, amp, odd)
            })
            .collect();
        Self { terms }
    }

    fn eval(&self, u: f64, v: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(fu, fv, phase, amp, odd)| {
                let hu = if odd { (PI * fu * u).sin() } else { (PI * fu * u).cos() };
                amp * hu * (PI * fv * v + phase).cos()
            })
            .sum()
    }
}

fn sample_fields<R: Rng>(rng: &mut R, count: usize, h: usize, w: usize, amplitude: f64, symmetric: bool) -> Array2<f64> {
    let mut out = Array2::zeros((count, h * w));
    for k in 0..count {
        let field = SmoothField::random(rng, symmetric);
        let mut row = out.row_mut(k);
        for y in 0..h {
            for x in 0..w {
                row[y * w + x] = field.eval(canonical(x as f64, w), canonical(y as f64, h));
            }
        }
        let rms = (row.iter().map(|v| v * v).sum::<f64>() / (h * w) as f64).sqrt().max(1e-12);
        // Decaying amplitude mimics a PCA basis ordered by variance.
        let scale = amplitude / rms / (1.0 + k as f64 / 10.0);
        row.mapv_inplace(|v| v * scale);
    }
    out
}

pub fn make_basis(seed: u64, height: usize, width: usize) -> Result<StyleBasis> {
    if height < 16 || width < 16 {
        return Err(Error::InvalidParameter(format!("basis needs H, W >= 16, got {height}x{width}")));
    }
    let (h, w) = (height, width);
    let mut base_mesh = Array1::zeros(h * w);
    for y in 0..h {
        for x in 0..w {
            base_mesh[y * w + x] = base_height(canonical(x as f64, w), canonical(y as f64, h));
        }
    }
    let shape = sample_fields(&mut substream(seed, domain::BASIS, 0, 0), SHAPE_DIM, h, w, SHAPE_AMPLITUDE, true);
    let expression = sample_fields(&mut substream(seed, domain::BASIS, 1, 0), EXPRESSION_DIM, h, w, EXPRESSION_AMPLITUDE, true);

    let mut texture = Array2::zeros((TEXTURE_DIM, 3 * h * w));
    let mut rng = substream(seed, domain::BASIS, 2, 0);
    let gray = sample_fields(&mut rng, TEXTURE_DIM, h, w, TEXTURE_AMPLITUDE, false);
    for k in 0..TEXTURE_DIM {
        let tint: [f64; 3] = [rng.random_range(0.6..1.4), rng.random_range(0.6..1.4), rng.random_range(0.6..1.4)];
        for (c, t) in tint.iter().enumerate() {
            for i in 0..h * w {
                texture[[k, c * h * w + i]] = gray[[k, i]] * t;
            }
        }
    }
    let mut base_color = Array1::zeros(3 * h * w);
    for (c, col) in BASE_COLOR.iter().enumerate() {
        base_color.slice_mut(ndarray::s![c * h * w..(c + 1) * h * w]).fill(*col);
    }
    Ok(StyleBasis {
        seed,
        height: h,
        width: w,
        base_mesh,
        shape,
        expression,
        texture,
        base_color,
    })
}
