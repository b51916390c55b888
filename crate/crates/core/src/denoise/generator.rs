//! Conditional noise estimator: the dense network, the style encoder and
//! the two learnable empty contexts, trained jointly.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mlp::{time_embedding, Mlp, TIME_EMBED_DIM};
use super::{Denoiser, Selection};
use crate::error::{Error, Result};
use crate::identity::IDENTITY_DIM;
use crate::nn::{Adam, Parameters, Scalar};
use crate::schedule::DiffusionSchedule;
use crate::stylemodel::encoder::STYLE_EMBED_DIM;
use crate::stylemodel::StyleEncoder;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorShape {
    pub latent_dim: usize,
    pub map_height: usize,
    pub map_width: usize,
    pub hidden: Vec<usize>,
    pub encoder_channels: (usize, usize),
    pub id_dim: usize,
    pub style_dim: usize,
}

impl GeneratorShape {
    pub fn new(latent_dim: usize, map_height: usize, map_width: usize) -> Self {
        Self {
            latent_dim,
            map_height,
            map_width,
            hidden: vec![512, 512],
            encoder_channels: (16, 16),
            id_dim: IDENTITY_DIM,
            style_dim: STYLE_EMBED_DIM,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.latent_dim + TIME_EMBED_DIM + self.id_dim + self.style_dim
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(&self.hidden);
        w.push(self.latent_dim);
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T: Scalar> {
    pub latent_dim: usize,
    pub mlp: Mlp<T>,
    pub encoder: StyleEncoder<T>,
    pub id_empty: Array1<T>,
    pub sty_empty: Array1<T>,
}

/// One training batch: clean latents, identity contexts and channel-last
/// render maps, one row per item.
#[derive(Debug, Clone)]
pub struct TrainBatch<T: Scalar> {
    pub z0: Array2<T>,
    pub c_id: Array2<T>,
    pub maps: Array2<T>,
}

impl<T: Scalar> TrainBatch<T> {
    pub fn len(&self) -> usize {
        self.z0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.z0.nrows() == 0
    }
}

/// The random choices of one training step, drawn up front so that the
/// loss is a deterministic function of the parameters.
#[derive(Debug, Clone)]
pub struct StepDraws<T: Scalar> {
    pub t: Vec<usize>,
    pub eps: Array2<T>,
    pub drop_id: Vec<bool>,
    pub drop_sty: Vec<bool>,
}

impl<T: Scalar> StepDraws<T> {
    /// Uniform timesteps, standard normal noise and independent context
    /// dropout per item.
    pub fn sample<R: Rng>(n: usize, latent_dim: usize, steps: usize, dropout_p: f64, rng: &mut R) -> Self {
        let mut t = Vec::with_capacity(n);
        let mut drop_id = Vec::with_capacity(n);
        let mut drop_sty = Vec::with_capacity(n);
        for _ in 0..n {
            t.push(rng.random_range(1..=steps));
            drop_id.push(rng.random::<f64>() < dropout_p);
            drop_sty.push(rng.random::<f64>() < dropout_p);
        }
        let eps = Array2::from_shape_simple_fn((n, latent_dim), || {
            let v: f64 = StandardNormal.sample(rng);
            T::of(v)
        });
        Self { t, eps, drop_id, drop_sty }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub loss: f64,
    pub id_dropped: usize,
    pub sty_dropped: usize,
}

impl<T: Scalar> Generator<T> {
    pub fn new<R: Rng>(shape: &GeneratorShape, rng: &mut R) -> Self {
        let mlp = Mlp::new(&shape.widths(), rng);
        let encoder = StyleEncoder::new(shape.map_height, shape.map_width, shape.encoder_channels, shape.style_dim, rng);
        let mut empty = |d: usize| {
            Array1::from_shape_simple_fn(d, || {
                let v: f64 = StandardNormal.sample(rng);
                T::of(v / (d as f64).sqrt())
            })
        };
        let id_empty = empty(shape.id_dim);
        let sty_empty = empty(shape.style_dim);
        Self { latent_dim: shape.latent_dim, mlp, encoder, id_empty, sty_empty }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self {
            latent_dim: other.latent_dim,
            mlp: Mlp::zeros_like(&other.mlp),
            encoder: StyleEncoder::zeros_like(&other.encoder),
            id_empty: Array1::zeros(other.id_empty.len()),
            sty_empty: Array1::zeros(other.sty_empty.len()),
        }
    }

    pub fn shape(&self) -> GeneratorShape {
        let widths = self.mlp.widths();
        GeneratorShape {
            latent_dim: self.latent_dim,
            map_height: self.encoder.height,
            map_width: self.encoder.width,
            hidden: widths[1..widths.len() - 1].to_vec(),
            encoder_channels: (self.encoder.conv1.out_channels, self.encoder.conv2.out_channels),
            id_dim: self.id_empty.len(),
            style_dim: self.sty_empty.len(),
        }
    }

    pub fn id_dim(&self) -> usize {
        self.id_empty.len()
    }

    pub fn style_dim(&self) -> usize {
        self.sty_empty.len()
    }

    fn check_batch(&self, batch: &TrainBatch<T>) -> Result<()> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::EmptyInput("training batch"));
        }
        let want = [
            (batch.z0.dim(), (n, self.latent_dim)),
            (batch.c_id.dim(), (n, self.id_dim())),
            (batch.maps.dim(), (n, self.encoder.input_len())),
        ];
        for (got, expected) in want {
            if got != expected {
                return Err(Error::shape("training batch", &[expected.0, expected.1], &[got.0, got.1]));
            }
        }
        Ok(())
    }

    /// Assembles `[z_t | temb(t) | c_id | c_sty]` rows.
    fn inputs(&self, z_t: ArrayView2<T>, t: &[usize], c_id: ArrayView2<T>, c_sty: ArrayView2<T>) -> Array2<T> {
        let (n, d) = z_t.dim();
        let (di, ds) = (self.id_dim(), self.style_dim());
        let mut x = Array2::zeros((n, d + TIME_EMBED_DIM + di + ds));
        for i in 0..n {
            let mut row = x.row_mut(i);
            row.slice_mut(s![..d]).assign(&z_t.row(i));
            row.slice_mut(s![d..d + TIME_EMBED_DIM]).assign(&time_embedding::<T>(t[i], TIME_EMBED_DIM));
            let o = d + TIME_EMBED_DIM;
            row.slice_mut(s![o..o + di]).assign(&c_id.row(i));
            row.slice_mut(s![o + di..]).assign(&c_sty.row(i));
        }
        x
    }

    /// Network output for explicit contexts; no dropout or empties applied.
    pub fn predict(&self, z_t: ArrayView2<T>, t: &[usize], c_id: ArrayView2<T>, c_sty: ArrayView2<T>) -> Array2<T> {
        self.mlp.apply(&self.inputs(z_t, t, c_id, c_sty))
    }

    /// Mean squared noise-prediction error over items and latent entries,
    /// and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, schedule: &DiffusionSchedule, batch: &TrainBatch<T>, draws: &StepDraws<T>) -> Result<(f64, Generator<T>)> {
        self.check_batch(batch)?;
        let n = batch.len();
        let d = self.latent_dim;
        for &t in &draws.t {
            schedule.check(t)?;
        }
        let mut z_t = Array2::zeros((n, d));
        for i in 0..n {
            let ab = schedule.alpha_bar(draws.t[i]);
            let (a, b) = (T::of(ab.sqrt()), T::of((1.0 - ab).sqrt()));
            ndarray::Zip::from(z_t.row_mut(i))
                .and(batch.z0.row(i))
                .and(draws.eps.row(i))
                .for_each(|z, &x, &e| *z = a * x + b * e);
        }
        let (styles, enc_cache) = self.encoder.forward(&batch.maps);
        let mut c_id = batch.c_id.clone();
        let mut c_sty = styles;
        for i in 0..n {
            if draws.drop_id[i] {
                c_id.row_mut(i).assign(&self.id_empty);
            }
            if draws.drop_sty[i] {
                c_sty.row_mut(i).assign(&self.sty_empty);
            }
        }
        let x = self.inputs(z_t.view(), &draws.t, c_id.view(), c_sty.view());
        let (out, cache) = self.mlp.forward(x);
        let diff = &out - &draws.eps;
        let count = (n * d) as f64;
        let loss = diff.iter().map(|&v| Scalar::to_f64(v).powi(2)).sum::<f64>() / count;
        let d_out = diff.mapv(|v| v * T::of(2.0 / count));

        let mut grad = Generator::zeros_like(self);
        let dx = self.mlp.backward(&cache, &d_out, &mut grad.mlp, true).expect("input gradient");
        let o = d + TIME_EMBED_DIM;
        let (di, ds) = (self.id_dim(), self.style_dim());
        let mut d_styles = Array2::zeros((n, ds));
        for i in 0..n {
            let row = dx.row(i);
            if draws.drop_id[i] {
                grad.id_empty += &row.slice(s![o..o + di]);
            }
            if draws.drop_sty[i] {
                grad.sty_empty += &row.slice(s![o + di..]);
            } else {
                d_styles.row_mut(i).assign(&row.slice(s![o + di..]));
            }
        }
        if draws.drop_sty.iter().any(|&dropped| !dropped) {
            self.encoder.backward(&enc_cache, &d_styles, &mut grad.encoder);
        }
        Ok((loss, grad))
    }

    /// Draws timesteps, noise and dropout, then applies one optimiser
    /// update. Returns the loss before the update.
    pub fn train_step<R: Rng>(
        &mut self,
        adam: &mut Adam,
        schedule: &DiffusionSchedule,
        batch: &TrainBatch<T>,
        dropout_p: f64,
        rng: &mut R,
    ) -> Result<StepReport> {
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(Error::InvalidParameter(format!("dropout_p = {dropout_p} outside [0, 1)")));
        }
        let draws = StepDraws::sample(batch.len(), self.latent_dim, schedule.steps(), dropout_p, rng);
        let (loss, grad) = self.loss_and_grad(schedule, batch, &draws)?;
        if !loss.is_finite() || !grad.all_finite() {
            return Err(Error::NonFinite(format!(
                "training loss {loss} after {} optimiser steps (batch of {})",
                adam.steps_taken(),
                batch.len()
            )));
        }
        adam.update(self, &grad);
        Ok(StepReport {
            loss,
            id_dropped: draws.drop_id.iter().filter(|&&b| b).count(),
            sty_dropped: draws.drop_sty.iter().filter(|&&b| b).count(),
        })
    }
}

impl<T: Scalar> Parameters for Generator<T> {
    type Elem = T;

    fn tensors(&self) -> Vec<&[T]> {
        let mut v = self.mlp.slices();
        v.extend(self.encoder.slices());
        v.push(self.id_empty.as_slice().expect("standard layout"));
        v.push(self.sty_empty.as_slice().expect("standard layout"));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = self.mlp.slices_mut();
        v.extend(self.encoder.slices_mut());
        v.push(self.id_empty.as_slice_mut().expect("standard layout"));
        v.push(self.sty_empty.as_slice_mut().expect("standard layout"));
        v
    }
}

/// First-layer contributions of the contexts, computed once per batch of
/// trajectories and reused at every timestep.
#[derive(Debug, Clone)]
pub struct PreparedContexts {
    id: Array2<f32>,
    sty: Array2<f32>,
    id_empty: Array1<f32>,
    sty_empty: Array1<f32>,
}

impl PreparedContexts {
    pub fn rows(&self) -> usize {
        self.id.nrows()
    }
}

impl Generator<f32> {
    /// Style embeddings of channel-last map rows.
    pub fn encode_styles(&self, maps: &Array2<f32>) -> Array2<f32> {
        self.encoder.apply(maps)
    }

    /// `None` for a context means it is disabled: the empty embedding is
    /// used even where the selection asks for the given context.
    pub fn prepare(&self, rows: usize, c_id: Option<ArrayView2<f32>>, c_sty: Option<ArrayView2<f32>>) -> Result<PreparedContexts> {
        let w = &self.mlp.layers[0].weight;
        let o = self.latent_dim + TIME_EMBED_DIM;
        let (di, ds) = (self.id_dim(), self.style_dim());
        let w_id = w.slice(s![o..o + di, ..]);
        let w_sty = w.slice(s![o + di.., ..]);
        let id_empty = self.id_empty.dot(&w_id);
        let sty_empty = self.sty_empty.dot(&w_sty);
        let project = |c: Option<ArrayView2<f32>>, dim: usize, wm: ArrayView2<f32>, empty: &Array1<f32>| -> Result<Array2<f32>> {
            match c {
                Some(c) => {
                    if c.dim() != (rows, dim) {
                        return Err(Error::shape("generation context", &[rows, dim], c.shape()));
                    }
                    Ok(c.dot(&wm))
                }
                None => Ok(empty.broadcast((rows, empty.len())).expect("row broadcast").to_owned()),
            }
        };
        let id = project(c_id, di, w_id, &id_empty)?;
        let sty = project(c_sty, ds, w_sty, &sty_empty)?;
        Ok(PreparedContexts { id, sty, id_empty, sty_empty })
    }
}

impl Denoiser for Generator<f32> {
    type Prepared = PreparedContexts;

    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn eps(&self, z_t: &Array2<f32>, t: usize, sel: Selection, prepared: &PreparedContexts) -> Result<Array2<f32>> {
        let (n, d) = z_t.dim();
        if n != prepared.rows() || d != self.latent_dim {
            return Err(Error::shape("generator eps", &[prepared.rows(), self.latent_dim], &[n, d]));
        }
        let layer = &self.mlp.layers[0];
        let w_z = layer.weight.slice(s![..d, ..]);
        let w_t = layer.weight.slice(s![d..d + TIME_EMBED_DIM, ..]);
        let mut bias = time_embedding::<f32>(t, TIME_EMBED_DIM).dot(&w_t);
        bias += &layer.bias;
        if !sel.id {
            bias += &prepared.id_empty;
        }
        if !sel.sty {
            bias += &prepared.sty_empty;
        }
        let mut pre = z_t.dot(&w_z);
        pre += &bias.insert_axis(Axis(0));
        if sel.id {
            pre += &prepared.id;
        }
        if sel.sty {
            pre += &prepared.sty;
        }
        self.mlp.finish_from_first(&mut pre);
        Ok(pre)
    }
}
