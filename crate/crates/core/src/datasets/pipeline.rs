//! In-memory pipeline stages. The commands in `commands` wrap these with
//! persistence; tests and benchmarks call them directly.

use ndarray::{s, Array2, Array3, Array4, ArrayView2, ArrayView3, Axis};
use rand::seq::index::sample;
use rayon::prelude::*;

use super::config::PipelineConfig;
use crate::codec::LatentCodec;
use crate::denoise::{generate, BlendConfig, BlendMode, Generator, GeneratorShape, Trace, TrainBatch};
use crate::error::{Error, Result};
use crate::identity::{quality_score, IdentityEmbedding, IdentityExtractor, IDENTITY_DIM};
use crate::nn::{Adam, AdamConfig, Parameters};
use crate::rng::{domain, substream, StreamKey};
use crate::schedule::DiffusionSchedule;
use crate::stylemodel::encoder::maps_to_row;
use crate::stylemodel::attributes::SHAPE_DIM;
use crate::stylemodel::{make_basis, render, StyleAttributes, StyleBasis};
use crate::stylesampler::{apply_shape_replacement, sample_attributes, sample_class, ClassStyle, SamplingStrategy, StylePrior};
use crate::worldgen::{generate_world, World, WorldSpec};

/// Trajectories are generated in fixed-size chunks so the work split does
/// not depend on the worker count.
pub const GENERATION_CHUNK: usize = 32;

/// Everything derived from the config alone.
#[derive(Debug, Clone)]
pub struct Assets {
    pub config: PipelineConfig,
    pub basis: StyleBasis,
    pub schedule: DiffusionSchedule,
    pub codec: LatentCodec,
}

impl Assets {
    pub fn new(config: &PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            basis: make_basis(config.render.basis_seed, config.render.height, config.render.width)?,
            schedule: config.schedule.build()?,
            codec: config.codec,
        })
    }

    pub fn latent_shape(&self) -> [usize; 3] {
        self.codec.latent_shape(3, self.basis.height, self.basis.width)
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_shape().iter().product()
    }

    pub fn generator_shape(&self) -> GeneratorShape {
        GeneratorShape::new(self.latent_dim(), self.basis.height, self.basis.width)
    }

    pub fn world_spec(&self) -> WorldSpec {
        let w = &self.config.world;
        let mut spec = WorldSpec::standard(self.config.seed, w.n_subjects, w.images_per_subject);
        spec.true_rho = w.true_rho;
        spec.overlay_amplitude = w.overlay_amplitude;
        spec
    }

    pub fn world(&self) -> Result<World> {
        generate_world(&self.world_spec(), &self.basis)
    }

    pub fn extractor(&self) -> Result<IdentityExtractor> {
        IdentityExtractor::new(self.config.analysis.extractor_seed, self.basis.height, self.basis.width)
    }

    /// Channel-last render-map rows for the style encoder.
    pub fn map_rows(&self, attrs: &[StyleAttributes]) -> Array2<f32> {
        let rows: Vec<ndarray::Array1<f32>> = attrs.par_iter().map(|p| maps_to_row(&render(&self.basis, p).concat())).collect();
        stack_rows(&rows, 9 * self.basis.height * self.basis.width)
    }

    pub fn encode_latents(&self, images: &Array4<f32>) -> Result<Array2<f32>> {
        let d = self.latent_dim();
        let rows: Vec<ndarray::Array1<f32>> = par_images(images)
            .map(|im| self.codec.encode(im).map(|z| z.into_shape_with_order(d).expect("contiguous")))
            .collect::<Result<_>>()?;
        Ok(stack_rows(&rows, d))
    }

    pub fn decode_latents(&self, z: &Array2<f32>) -> Array4<f32> {
        let [c, h, w] = self.latent_shape();
        let (ih, iw) = (self.basis.height, self.basis.width);
        let decoded: Vec<Array3<f32>> = (0..z.nrows())
            .into_par_iter()
            .map(|i| self.codec.decode(z.row(i).into_shape_with_order((c, h, w)).expect("latent row")))
            .collect();
        let mut out = Array4::zeros((z.nrows(), 3, ih, iw));
        for (mut dst, src) in out.outer_iter_mut().zip(&decoded) {
            dst.assign(src);
        }
        out
    }
}

/// Parallel iterator over the images of an `(N, C, H, W)` stack.
pub fn par_images(images: &Array4<f32>) -> impl IndexedParallelIterator<Item = ArrayView3<'_, f32>> {
    (0..images.len_of(Axis(0))).into_par_iter().map(move |i| images.index_axis(Axis(0), i))
}

fn stack_rows(rows: &[ndarray::Array1<f32>], width: usize) -> Array2<f32> {
    let mut m = Array2::zeros((rows.len(), width));
    for (mut dst, src) in m.outer_iter_mut().zip(rows) {
        dst.assign(src);
    }
    m
}

pub fn embed_images(extractor: &IdentityExtractor, images: &Array4<f32>) -> Result<Array2<f32>> {
    let embs: Vec<IdentityEmbedding> = par_images(images).map(|im| extractor.embed(im)).collect::<Result<_>>()?;
    let mut m = Array2::zeros((embs.len(), IDENTITY_DIM));
    for (mut row, e) in m.outer_iter_mut().zip(&embs) {
        row.assign(e.as_array());
    }
    Ok(m)
}

pub fn image_views(images: &Array4<f32>) -> Vec<ArrayView3<'_, f32>> {
    images.outer_iter().collect()
}

/// Training tensors: clean latents, identity contexts of the same images,
/// and render maps of their attributes.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub z0: Array2<f32>,
    pub c_id: Array2<f32>,
    pub maps: Array2<f32>,
}

impl TrainingData {
    pub fn new(assets: &Assets, images: &Array4<f32>, embeddings: Array2<f32>, attributes: &[StyleAttributes]) -> Result<Self> {
        if images.len_of(Axis(0)) != attributes.len() || embeddings.nrows() != attributes.len() {
            return Err(Error::shape("training corpus", &[attributes.len()], &[images.len_of(Axis(0)), embeddings.nrows()]));
        }
        Ok(Self {
            z0: assets.encode_latents(images)?,
            c_id: embeddings,
            maps: assets.map_rows(attributes),
        })
    }

    pub fn len(&self) -> usize {
        self.z0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.z0.nrows() == 0
    }

    fn batch(&self, idx: &[usize]) -> TrainBatch<f32> {
        TrainBatch {
            z0: self.z0.select(Axis(0), idx),
            c_id: self.c_id.select(Axis(0), idx),
            maps: self.maps.select(Axis(0), idx),
        }
    }
}

/// Mean loss over one logging window.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub loss: f64,
}

/// Runs the configured number of optimiser steps from a seeded
/// initialisation. Batches are drawn without replacement within a step.
pub fn train(assets: &Assets, data: &TrainingData, mut on_log: impl FnMut(LossPoint)) -> Result<(Generator<f32>, Vec<LossPoint>)> {
    if data.is_empty() {
        return Err(Error::EmptyInput("training corpus"));
    }
    let cfg = &assets.config.training;
    let seed = assets.config.seed;
    let mut model = Generator::<f32>::new(&assets.generator_shape(), &mut substream(seed, domain::TRAIN_INIT, 0, 0));
    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..Default::default() }, model.parameter_count());
    let batch = cfg.batch.min(data.len());
    let mut history = Vec::new();
    let mut window = 0.0;
    for step in 0..cfg.steps {
        let mut rng = substream(seed, domain::TRAIN_BATCH, step as u64, 0);
        let idx = sample(&mut rng, data.len(), batch).into_vec();
        let report = model.train_step(&mut adam, &assets.schedule, &data.batch(&idx), cfg.dropout_p, &mut rng)?;
        window += report.loss;
        let done = step + 1;
        if done % cfg.log_every == 0 || done == cfg.steps {
            let span = if done % cfg.log_every == 0 { cfg.log_every } else { done % cfg.log_every };
            let point = LossPoint { step: done, loss: window / span as f64 };
            on_log(point);
            history.push(point);
            window = 0.0;
        }
    }
    Ok((model, history))
}

/// Ancestral sampling for many rows in parallel fixed-size chunks.
/// `c_id` / `style_maps` of `None` disable that context.
pub fn sample_latents(
    assets: &Assets,
    model: &Generator<f32>,
    blend: &BlendConfig,
    c_id: Option<ArrayView2<f32>>,
    style_maps: Option<ArrayView2<f32>>,
    keys: &[StreamKey],
) -> Result<(Array2<f32>, Trace)> {
    let n = keys.len();
    let chunks: Vec<(Array2<f32>, Trace)> = (0..n.div_ceil(GENERATION_CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * GENERATION_CHUNK;
            let hi = (lo + GENERATION_CHUNK).min(n);
            let id = c_id.map(|m| m.slice_move(s![lo..hi, ..]));
            let sty = style_maps.map(|m| model.encode_styles(&m.slice_move(s![lo..hi, ..]).to_owned()));
            let prepared = model.prepare(hi - lo, id, sty.as_ref().map(|m| m.view()))?;
            generate(model, &assets.schedule, &prepared, blend, &keys[lo..hi])
        })
        .collect::<Result<_>>()?;
    let mut z = Array2::zeros((n, model.latent_dim));
    let mut trace = Trace::default();
    for (c, (part, t)) in chunks.into_iter().enumerate() {
        let lo = c * GENERATION_CHUNK;
        z.slice_mut(s![lo..lo + part.nrows(), ..]).assign(&part);
        if c == 0 {
            trace = t;
        }
    }
    Ok((z, trace))
}

/// Filtered reference identities for the synthetic subjects.
#[derive(Debug, Clone)]
pub struct References {
    pub images: Array4<f32>,
    /// Style the reference was rendered with; its shape block seeds shape
    /// replacement and replicated classes reuse it whole.
    pub attributes: Vec<StyleAttributes>,
    pub embeddings: Array2<f32>,
    /// Candidate index of each kept reference.
    pub candidate: Vec<usize>,
    pub candidates_generated: usize,
}

/// Generates candidates with an empty identity context and a style drawn
/// from the prior, then keeps them greedily in order: quality at least
/// `q_min` and similarity below `tau` to everything kept so far.
pub fn make_references(
    assets: &Assets,
    model: &Generator<f32>,
    extractor: &IdentityExtractor,
    prior: &StylePrior,
    n_subjects: usize,
) -> Result<References> {
    let cfg = &assets.config;
    let seed = cfg.seed;
    let limit = n_subjects * cfg.filter.max_candidate_ratio;
    let plain = BlendConfig { mode: BlendMode::NoBlending, ..cfg.blend };
    let mut kept: Vec<usize> = Vec::new();
    let mut kept_emb: Vec<IdentityEmbedding> = Vec::new();
    let mut all_images: Vec<Array3<f32>> = Vec::new();
    let mut all_attrs: Vec<StyleAttributes> = Vec::new();
    let mut generated = 0;
    while kept.len() < n_subjects && generated < limit {
        let round = (n_subjects - kept.len()).max(GENERATION_CHUNK).min(limit - generated);
        let ids: Vec<u64> = (generated..generated + round).map(|i| i as u64).collect();
        let attrs: Vec<StyleAttributes> = ids
            .iter()
            .map(|&i| StyleAttributes::from_vec(prior.sample(&mut substream(seed, domain::REFERENCE, i, 1)).to_vec()))
            .collect::<Result<_>>()?;
        let keys: Vec<StreamKey> = ids.iter().map(|&i| StreamKey::new(seed, domain::REFERENCE, i, 0)).collect();
        let maps = assets.map_rows(&attrs);
        let (z, _) = sample_latents(assets, model, &plain, None, Some(maps.view()), &keys)?;
        let images = assets.decode_latents(&z);
        let scored: Vec<(IdentityEmbedding, f64)> = par_images(&images)
            .map(|im| Ok((extractor.embed(im)?, quality_score(im))))
            .collect::<Result<_>>()?;
        for (i, (emb, q)) in scored.into_iter().enumerate() {
            if kept.len() == n_subjects {
                break;
            }
            let distinct = kept_emb.iter().all(|k| crate::identity::cosine_similarity(k, &emb) < cfg.filter.tau);
            if q >= cfg.filter.q_min && distinct {
                kept.push(generated + i);
                kept_emb.push(emb);
            }
        }
        all_images.extend(images.outer_iter().map(|v| v.to_owned()));
        all_attrs.extend(attrs);
        generated += round;
    }
    if kept.len() < n_subjects {
        return Err(Error::Degenerate(format!(
            "only {} of {n_subjects} reference candidates passed the filter after {generated} draws",
            kept.len()
        )));
    }
    let (h, w) = (assets.basis.height, assets.basis.width);
    let mut images = Array4::zeros((n_subjects, 3, h, w));
    for (mut dst, &i) in images.outer_iter_mut().zip(&kept) {
        dst.assign(&all_images[i]);
    }
    let mut embeddings = Array2::zeros((n_subjects, IDENTITY_DIM));
    for (mut row, e) in embeddings.outer_iter_mut().zip(&kept_emb) {
        row.assign(e.as_array());
    }
    Ok(References {
        images,
        attributes: kept.iter().map(|&i| all_attrs[i].clone()).collect(),
        embeddings,
        candidate: kept,
        candidates_generated: generated,
    })
}

/// One generated dataset.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub images: Array4<f32>,
    pub labels: Vec<u64>,
    /// Sampled style per image; `None` when the style context is disabled.
    pub attributes: Option<Vec<StyleAttributes>>,
    pub keys: Vec<StreamKey>,
    pub trace: Trace,
}

/// Class style for subject `c` under `strategy`.
pub fn class_style(assets: &Assets, prior: &StylePrior, strategy: SamplingStrategy, refs: &References, c: usize) -> Result<Option<ClassStyle>> {
    let m = refs.attributes.len();
    let reference = &refs.attributes[c];
    Ok(match strategy {
        SamplingStrategy::Uncontrolled => None,
        SamplingStrategy::Replicated => Some(ClassStyle::replicated(c as u64, reference, m)),
        other => {
            let mut rng = substream(assets.config.seed, domain::CLASS_STYLE, c as u64, 0);
            let class = sample_class(prior, other, c as u64, m, &mut rng)?;
            if assets.config.sampler.shape_replacement {
                Some(apply_shape_replacement(&class, &reference.as_slice()[..SHAPE_DIM])?)
            } else {
                Some(class)
            }
        }
    })
}

/// Images for every reference subject: class style, per-image styles,
/// their render maps as style context, the reference embedding as
/// identity context, then guided sampling.
pub fn synthesize(
    assets: &Assets,
    model: &Generator<f32>,
    prior: &StylePrior,
    refs: &References,
    strategy: SamplingStrategy,
    blend: &BlendConfig,
    images_per_subject: usize,
) -> Result<Synthetic> {
    strategy.validate()?;
    let seed = assets.config.seed;
    let m = refs.attributes.len();
    let n = images_per_subject;
    let mut labels = Vec::with_capacity(m * n);
    let mut keys = Vec::with_capacity(m * n);
    let mut attrs: Vec<StyleAttributes> = Vec::with_capacity(m * n);
    let mut c_id = Array2::zeros((m * n, refs.embeddings.ncols()));
    for c in 0..m {
        let class = class_style(assets, prior, strategy, refs, c)?;
        for j in 0..n {
            let row = c * n + j;
            labels.push(c as u64);
            keys.push(StreamKey::new(seed, domain::GENERATE, c as u64, j as u64));
            c_id.row_mut(row).assign(&refs.embeddings.row(c));
            if let Some(class) = &class {
                let key = StreamKey::new(seed, domain::IMAGE_STYLE, c as u64, j as u64);
                attrs.push(sample_attributes(class, &mut key.stream()));
            }
        }
    }
    let attributes = (strategy != SamplingStrategy::Uncontrolled).then_some(attrs);
    let maps = attributes.as_ref().map(|a| assets.map_rows(a));
    let (z, trace) = sample_latents(assets, model, blend, Some(c_id.view()), maps.as_ref().map(|m| m.view()), &keys)?;
    Ok(Synthetic {
        images: assets.decode_latents(&z),
        labels,
        attributes,
        keys,
        trace,
    })
}
