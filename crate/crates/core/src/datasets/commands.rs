//! Pipeline commands over an output directory:
//!
//! ```text
//! out/world/      ground-truth corpus, extractor calibration
//! out/prior/      fitted style prior
//! out/model/      generator checkpoint and loss log
//! out/synth/RUN/  one generated dataset and its metric reports
//! out/ablation/   strategy and blending comparison
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Array4, Ix1, Ix2, Ix4};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::checkpoint::{load_checkpoint, save_checkpoint};
use super::config::{EmbeddingSpace, PipelineConfig};
use super::manifest::{DatasetKind, DatasetManifest, ImageRecord, Settings, SubjectRecord, TensorRef, MANIFEST_VERSION};
use super::pipeline::{embed_images, image_views, make_references, synthesize, train, Assets, References, Synthetic, TrainingData};
use super::tensor::{read_f32, read_f64, write_f32, write_f64, TensorFile};
use crate::denoise::{BlendConfig, BlendMode, Generator};
use crate::error::{Error, Result};
use crate::identity::IdentityExtractor;
use crate::metrics::{
    attribute_records, attribute_variance, eir, frequency_records, frequency_variance, privacy_overlap, similarity_records, similarity_stats,
    style_features, write_reports, LabeledEmbeddingSet, MetricRecord, SimilarityStats, STYLE_PATCH,
};
use crate::stylemodel::attributes::SHAPE_DIM;
use crate::stylemodel::{Block, StyleAttributes};
use crate::stylesampler::{fit_prior, SamplingStrategy, StylePrior};

const IMAGES: &str = "images.mft";
const ATTRIBUTES: &str = "attributes.mft";
const EMBEDDINGS: &str = "embeddings.mft";
const REFERENCES: &str = "references.mft";
const REFERENCE_EMBEDDINGS: &str = "reference_embeddings.mft";
const REFERENCE_ATTRIBUTES: &str = "reference_attributes.mft";

/// Resolved inputs of one command invocation.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PipelineConfig,
    pub out: PathBuf,
    /// Size of the worker pool; `None` uses rayon's default.
    pub workers: Option<usize>,
}

impl RunOptions {
    pub fn new(config: PipelineConfig, out: impl Into<PathBuf>) -> Self {
        Self { config, out: out.into(), workers: None }
    }

    pub fn world_dir(&self) -> PathBuf {
        self.out.join("world")
    }

    pub fn prior_dir(&self) -> PathBuf {
        self.out.join("prior")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.out.join("model")
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out.join("synth").join(run_name(self.config.sampler.strategy(), &self.config.blend))
    }

    pub fn ablation_dir(&self) -> PathBuf {
        self.out.join("ablation")
    }

    /// Runs `f` inside a pool of the requested size.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        match self.workers {
            None => f(),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?
                .install(f),
        }
    }
}

pub fn run_name(strategy: SamplingStrategy, blend: &BlendConfig) -> String {
    let s = match strategy {
        SamplingStrategy::SubjectAware { rho } => format!("subject_aware-rho{rho}"),
        other => other.name().to_string(),
    };
    format!("{s}_{}-t{}-w{}", blend.mode.name(), blend.t0, blend.w)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn require_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(dir.to_path_buf()))
    }
}

fn attribute_matrix(attrs: &[StyleAttributes]) -> Array2<f64> {
    let mut m = Array2::zeros((attrs.len(), crate::stylemodel::STYLE_DIM));
    for (mut row, a) in m.outer_iter_mut().zip(attrs) {
        row.assign(&ndarray::ArrayView1::from(a.as_slice()));
    }
    m
}

fn attributes_from(m: &Array2<f64>) -> Result<Vec<StyleAttributes>> {
    m.outer_iter().map(|r| StyleAttributes::from_vec(r.to_vec())).collect()
}

/// Grid preview in binary PPM: one row per class (up to `rows`), up to
/// `cols` images each.
pub fn write_ppm_grid(path: &Path, images: &Array4<f32>, labels: &[u64], rows: usize, cols: usize) -> Result<()> {
    let (_, _, h, w) = images.dim();
    let mut grid: Vec<Vec<usize>> = Vec::new();
    for (i, &c) in labels.iter().enumerate() {
        match grid.iter().position(|g| labels[g[0]] == c) {
            Some(k) if grid[k].len() < cols => grid[k].push(i),
            Some(_) => {}
            None if grid.len() < rows => grid.push(vec![i]),
            None => {}
        }
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "P6 {} {} 255", cols * w, grid.len().max(1) * h)?;
    for g in &grid {
        for y in 0..h {
            for k in 0..cols {
                for x in 0..w {
                    for c in 0..3 {
                        let v = g.get(k).map_or(0.0, |&i| images[[i, c, y, x]]);
                        f.write_all(&[(v.clamp(0.0, 1.0) * 255.0).round() as u8])?;
                    }
                }
            }
        }
    }
    if grid.is_empty() {
        f.write_all(&vec![0u8; 3 * cols * w * h])?;
    }
    f.flush()?;
    Ok(())
}

fn write_config(dir: &Path, cfg: &PipelineConfig) -> Result<()> {
    std::fs::write(dir.join("config.json"), cfg.to_json())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSummary {
    pub images: usize,
    pub subjects: usize,
    pub intra_mean: f64,
    pub inter_mean: f64,
}

/// Builds the ground-truth corpus, calibrates the identity extractor on
/// it and embeds every image.
pub fn cmd_world(opts: &RunOptions) -> Result<WorldSummary> {
    opts.install(|| {
        let assets = Assets::new(&opts.config)?;
        let world = assets.world()?;
        let views = image_views(&world.images);
        let extractor = assets.extractor()?.calibrate(&views)?;
        let emb = embed_images(&extractor, &world.images)?;
        let set = LabeledEmbeddingSet::new(emb.clone(), world.labels.clone())?;
        let stats = similarity_stats(&set)?;

        let dir = opts.world_dir();
        create_dir(&dir)?;
        write_f32(&dir.join(IMAGES), &world.images, None)?;
        write_f64(&dir.join(ATTRIBUTES), &world.attribute_matrix(), None)?;
        write_f32(&dir.join(EMBEDDINGS), &emb, None)?;
        let (center, gain) = extractor.center();
        write_f32(&dir.join("extractor.mft"), center, Some(json!({"seed": extractor.seed(), "gain": gain})))?;
        write_f64(&dir.join("subject_means.mft"), &world.subject_means, None)?;

        let n = opts.config.world.images_per_subject;
        let subjects = (0..world.subject_means.nrows())
            .map(|c| SubjectRecord {
                class_id: c as u64,
                reference: TensorRef::new(IMAGES, c * n),
                c_id: TensorRef::new(EMBEDDINGS, c * n),
                shape: world.subject_means.row(c).as_slice().expect("row")[..SHAPE_DIM].to_vec(),
            })
            .collect();
        let images = (0..world.len())
            .map(|i| ImageRecord {
                image: TensorRef::new(IMAGES, i),
                class_id: world.labels[i],
                attributes: Some(TensorRef::new(ATTRIBUTES, i)),
                key: world.keys[i],
            })
            .collect();
        let spec = assets.world_spec();
        DatasetManifest {
            version: MANIFEST_VERSION,
            kind: DatasetKind::World,
            seed: opts.config.seed,
            settings: Settings {
                strategy: SamplingStrategy::SubjectAware { rho: spec.true_rho }.name().into(),
                rho: Some(spec.true_rho),
                blend: None,
                tau: None,
                q_min: None,
                shape_replacement: None,
            },
            image_shape: [3, assets.basis.height, assets.basis.width],
            subjects,
            images,
        }
        .write(&dir)?;
        write_ppm_grid(&dir.join("preview.ppm"), &world.images, &world.labels, 8, 8)?;
        write_config(&dir, &opts.config)?;
        Ok(WorldSummary {
            images: world.len(),
            subjects: world.subject_means.nrows(),
            intra_mean: stats.intra_mean,
            inter_mean: stats.inter_mean,
        })
    })
}

/// The persisted world corpus.
#[derive(Debug, Clone)]
pub struct LoadedWorld {
    pub manifest: DatasetManifest,
    pub images: Array4<f32>,
    pub attributes: Vec<StyleAttributes>,
    pub embeddings: Array2<f32>,
    pub extractor: IdentityExtractor,
}

pub fn load_world(opts: &RunOptions) -> Result<LoadedWorld> {
    let dir = opts.world_dir();
    require_dir(&dir)?;
    let manifest = DatasetManifest::read(&dir)?;
    let images: Array4<f32> = read_f32::<Ix4>(&dir.join(IMAGES))?;
    let attributes = attributes_from(&read_f64::<Ix2>(&dir.join(ATTRIBUTES))?)?;
    let embeddings = read_f32::<Ix2>(&dir.join(EMBEDDINGS))?;
    let ext = TensorFile::read(&dir.join("extractor.mft"))?;
    let meta = ext.metadata.clone().unwrap_or_default();
    let (Some(seed), Some(gain)) = (meta["seed"].as_u64(), meta["gain"].as_f64()) else {
        return Err(Error::Manifest("extractor.mft lacks seed/gain metadata".into()));
    };
    let center = ext.into_f32()?.into_dimensionality::<Ix1>().map_err(|e| Error::Manifest(e.to_string()))?;
    let [_, h, w] = manifest.image_shape;
    let extractor = IdentityExtractor::new(seed, h, w)?.with_center(center, gain as f32)?;
    if images.dim().0 != manifest.images.len() || attributes.len() != manifest.images.len() {
        return Err(Error::Manifest("world tensors disagree with the manifest".into()));
    }
    Ok(LoadedWorld { manifest, images, attributes, embeddings, extractor })
}

/// Fits the style prior to the world's attributes.
pub fn cmd_fit(opts: &RunOptions) -> Result<StylePrior> {
    opts.install(|| {
        let world = load_world(opts)?;
        let prior = fit_prior(attribute_matrix(&world.attributes).view())?;
        let dir = opts.prior_dir();
        create_dir(&dir)?;
        write_f64(&dir.join("mu.mft"), prior.mu(), Some(json!({"rows": world.attributes.len()})))?;
        write_f64(&dir.join("factor.mft"), prior.factor(), None)?;
        Ok(prior)
    })
}

pub fn load_prior(opts: &RunOptions) -> Result<StylePrior> {
    let dir = opts.prior_dir();
    require_dir(&dir)?;
    let mu: Array1<f64> = read_f64::<Ix1>(&dir.join("mu.mft"))?;
    let factor: Array2<f64> = read_f64::<Ix2>(&dir.join("factor.mft"))?;
    StylePrior::from_factor(mu, factor)
}

/// Trains the generator on the world corpus and checkpoints it.
pub fn cmd_train(opts: &RunOptions) -> Result<Vec<super::pipeline::LossPoint>> {
    opts.install(|| {
        let world = load_world(opts)?;
        let assets = Assets::new(&opts.config)?;
        let data = TrainingData::new(&assets, &world.images, world.embeddings.clone(), &world.attributes)?;
        let (model, history) = train(&assets, &data, |p| eprintln!("step {:>6}  loss {:.5}", p.step, p.loss))?;
        let dir = opts.model_dir();
        create_dir(&dir)?;
        save_checkpoint(&dir.join("checkpoint.mft"), &model, opts.config.schedule, opts.config.training.steps)?;
        let mut w = csv::Writer::from_path(dir.join("loss.csv"))?;
        for p in &history {
            w.serialize(p)?;
        }
        w.flush()?;
        write_config(&dir, &opts.config)?;
        Ok(history)
    })
}

pub fn load_model(opts: &RunOptions) -> Result<Generator<f32>> {
    let path = opts.model_dir().join("checkpoint.mft");
    let (model, meta) = load_checkpoint(&path)?;
    if meta.schedule != opts.config.schedule {
        return Err(Error::Config(format!("checkpoint was trained with schedule {:?}, config has {:?}", meta.schedule, opts.config.schedule)));
    }
    let expected = Assets::new(&opts.config)?.generator_shape();
    if meta.shape != expected {
        return Err(Error::Config(format!("checkpoint architecture {:?} does not match config {:?}", meta.shape, expected)));
    }
    Ok(model)
}

/// Everything `generate` and `ablate` need, loaded once.
pub struct Stage {
    pub assets: Assets,
    pub world: LoadedWorld,
    pub prior: StylePrior,
    pub model: Generator<f32>,
}

impl Stage {
    pub fn load(opts: &RunOptions) -> Result<Self> {
        Ok(Self {
            assets: Assets::new(&opts.config)?,
            world: load_world(opts)?,
            prior: load_prior(opts)?,
            model: load_model(opts)?,
        })
    }

    pub fn references(&self) -> Result<References> {
        make_references(&self.assets, &self.model, &self.world.extractor, &self.prior, self.assets.config.volumes.n_subjects)
    }

    pub fn synthesize(&self, refs: &References, strategy: SamplingStrategy, blend: &BlendConfig) -> Result<Synthetic> {
        synthesize(&self.assets, &self.model, &self.prior, refs, strategy, blend, self.assets.config.volumes.images_per_subject)
    }
}

/// References, class sampling, rendering and guided generation for the
/// configured strategy and blend; writes one dataset directory.
pub fn cmd_generate(opts: &RunOptions) -> Result<PathBuf> {
    opts.install(|| {
        let stage = Stage::load(opts)?;
        let refs = stage.references()?;
        let strategy = opts.config.sampler.strategy();
        let syn = stage.synthesize(&refs, strategy, &opts.config.blend)?;
        let dir = opts.run_dir();
        write_synthetic(&dir, opts, &refs, &syn)?;
        Ok(dir)
    })
}

fn write_synthetic(dir: &Path, opts: &RunOptions, refs: &References, syn: &Synthetic) -> Result<()> {
    let cfg = &opts.config;
    create_dir(dir)?;
    let _ = std::fs::remove_file(dir.join(ATTRIBUTES));
    write_f32(&dir.join(IMAGES), &syn.images, None)?;
    if let Some(a) = &syn.attributes {
        write_f64(&dir.join(ATTRIBUTES), &attribute_matrix(a), None)?;
    }
    write_f32(&dir.join(REFERENCES), &refs.images, Some(json!({"candidates_generated": refs.candidates_generated, "kept": refs.candidate})))?;
    write_f32(&dir.join(REFERENCE_EMBEDDINGS), &refs.embeddings, None)?;
    write_f64(&dir.join(REFERENCE_ATTRIBUTES), &attribute_matrix(&refs.attributes), None)?;
    let subjects = refs
        .attributes
        .iter()
        .enumerate()
        .map(|(c, a)| SubjectRecord {
            class_id: c as u64,
            reference: TensorRef::new(REFERENCES, c),
            c_id: TensorRef::new(REFERENCE_EMBEDDINGS, c),
            shape: a.as_slice()[..SHAPE_DIM].to_vec(),
        })
        .collect();
    let images = syn
        .labels
        .iter()
        .enumerate()
        .map(|(i, &c)| ImageRecord {
            image: TensorRef::new(IMAGES, i),
            class_id: c,
            attributes: syn.attributes.as_ref().map(|_| TensorRef::new(ATTRIBUTES, i)),
            key: syn.keys[i],
        })
        .collect();
    let strategy = cfg.sampler.strategy();
    let (_, _, h, w) = syn.images.dim();
    DatasetManifest {
        version: MANIFEST_VERSION,
        kind: DatasetKind::Synthetic,
        seed: cfg.seed,
        settings: Settings {
            strategy: strategy.name().into(),
            rho: matches!(strategy, SamplingStrategy::SubjectAware { .. }).then_some(cfg.sampler.rho),
            blend: Some(cfg.blend),
            tau: Some(cfg.filter.tau),
            q_min: Some(cfg.filter.q_min),
            shape_replacement: Some(cfg.sampler.shape_replacement),
        },
        image_shape: [3, h, w],
        subjects,
        images,
    }
    .write(dir)?;
    std::fs::write(dir.join("trace.json"), serde_json::to_vec_pretty(&syn.trace)?)?;
    write_ppm_grid(&dir.join("preview.ppm"), &syn.images, &syn.labels, 8, 10)?;
    write_config(dir, cfg)
}

/// Metric values for one synthetic set against the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub synth: SimilarityStats,
    pub world: SimilarityStats,
    pub eir: f64,
    pub privacy_inter_mean: f64,
    pub privacy_max_sim_mean: f64,
    pub synth_band_variance: Vec<f64>,
    pub records: Vec<MetricRecord>,
}

/// Computes every metric. `world_stats` may be passed in when analysing
/// several sets against the same world.
pub fn analyze(
    cfg: &PipelineConfig,
    world: &LoadedWorld,
    world_stats: Option<&SimilarityStats>,
    images: &Array4<f32>,
    labels: &[u64],
    attributes: Option<&[StyleAttributes]>,
) -> Result<Analysis> {
    let a = &cfg.analysis;
    let world_labels = world.manifest.labels();
    let real = LabeledEmbeddingSet::new(world.embeddings.clone(), world_labels.clone())?;
    let emb = embed_images(&world.extractor, images)?;
    let synth = LabeledEmbeddingSet::new(emb, labels.to_vec())?;
    let synth_stats = similarity_stats(&synth)?;
    let world_stats = match world_stats {
        Some(s) => s.clone(),
        None => similarity_stats(&real)?,
    };
    let eir_value = match a.eir_space {
        EmbeddingSpace::Style => {
            let r = LabeledEmbeddingSet::new(style_features(world.images.view(), STYLE_PATCH)?, world_labels.clone())?;
            let s = LabeledEmbeddingSet::new(style_features(images.view(), STYLE_PATCH)?, labels.to_vec())?;
            eir(&r, &s, a.eir_k)?
        }
        EmbeddingSpace::Identity => eir(&real, &synth, a.eir_k)?,
        EmbeddingSpace::Attributes => {
            let Some(attrs) = attributes else {
                return Err(Error::Config("attribute-space eIR needs a set with sampled attributes".into()));
            };
            let r = LabeledEmbeddingSet::new(attribute_matrix(&world.attributes).mapv(|v| v as f32), world_labels.clone())?;
            let s = LabeledEmbeddingSet::new(attribute_matrix(attrs).mapv(|v| v as f32), labels.to_vec())?;
            eir(&r, &s, a.eir_k)?
        }
    };
    let privacy = privacy_overlap(&synth, &real)?;
    let freq = frequency_variance(&image_views(images), a.bands)?;
    let world_freq = frequency_variance(&image_views(&world.images), a.bands)?;

    let mut records = similarity_records("synth.", &synth_stats);
    records.extend(similarity_records("world.", &world_stats));
    let space = match a.eir_space {
        EmbeddingSpace::Style => "style",
        EmbeddingSpace::Identity => "identity",
        EmbeddingSpace::Attributes => "attributes",
    };
    records.push(MetricRecord::new("eir", format!("k={};space={space}", a.eir_k), eir_value.value));
    for (c, v) in &eir_value.per_class {
        records.push(MetricRecord::new("eir.per_class", format!("class={c}"), *v));
    }
    let max_mean = privacy.per_item_max_sim.iter().sum::<f64>() / privacy.per_item_max_sim.len() as f64;
    records.push(MetricRecord::new("privacy.inter_mean", format!("subsampled={}", privacy.subsampled), privacy.inter_mean));
    records.push(MetricRecord::new("privacy.max_sim_mean", "", max_mean));
    for (i, (&s, &id)) in privacy.per_item_max_sim.iter().zip(&privacy.nearest_ids).enumerate() {
        records.push(MetricRecord::new("privacy.per_item_max_sim", format!("item={i};nearest={id}"), s));
    }
    if let Some(attrs) = attributes {
        records.extend(attribute_records("synth.", &attribute_variance(attrs, labels)?));
    }
    records.extend(attribute_records("world.", &attribute_variance(&world.attributes, &world_labels)?));
    records.extend(frequency_records("synth.", &freq));
    records.extend(frequency_records("world.", &world_freq));
    Ok(Analysis {
        synth: synth_stats,
        world: world_stats,
        eir: eir_value.value,
        privacy_inter_mean: privacy.inter_mean,
        privacy_max_sim_mean: max_mean,
        synth_band_variance: freq.band_variance,
        records,
    })
}

/// Analyses the dataset selected by the config (strategy and blend) and
/// writes `metrics.csv` / `metrics.json` next to it.
pub fn cmd_analyze(opts: &RunOptions) -> Result<Analysis> {
    opts.install(|| {
        let dir = opts.run_dir();
        require_dir(&dir)?;
        let manifest = DatasetManifest::read(&dir)?;
        let world = load_world(opts)?;
        let images = read_f32::<Ix4>(&dir.join(IMAGES))?;
        let attributes = match manifest.images.first().and_then(|r| r.attributes.as_ref()) {
            Some(_) => Some(attributes_from(&read_f64::<Ix2>(&dir.join(ATTRIBUTES))?)?),
            None => None,
        };
        let result = analyze(&opts.config, &world, None, &images, &manifest.labels(), attributes.as_deref())?;
        write_reports(&result.records, &dir.join("metrics.csv"), &dir.join("metrics.json"))?;
        Ok(result)
    })
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub group: String,
    pub name: String,
    pub strategy: String,
    pub blend: BlendConfig,
    pub eir: f64,
    pub intra_mean: f64,
    pub inter_mean: f64,
    pub privacy_inter_mean: f64,
    pub world_intra_mean: f64,
    pub band_variance: Vec<f64>,
    /// Intra-class attribute variance per block; empty without attributes.
    pub attribute_intra: Vec<f64>,
}

/// The four strategies under the configured blend; the four blend modes
/// under subject-aware sampling; then the shifting-timestep and weight
/// grid around the configured blend.
pub fn ablation_runs(cfg: &PipelineConfig) -> Vec<(String, SamplingStrategy, BlendConfig)> {
    let base = cfg.blend;
    let proposed = SamplingStrategy::SubjectAware { rho: cfg.sampler.rho };
    let mut runs: Vec<(String, SamplingStrategy, BlendConfig)> = [
        SamplingStrategy::Uncontrolled,
        SamplingStrategy::Replicated,
        SamplingStrategy::Uniform,
        proposed,
    ]
    .into_iter()
    .map(|s| ("strategy".to_string(), s, base))
    .collect();
    for mode in BlendMode::ALL {
        runs.push(("blend".into(), proposed, BlendConfig { mode, ..base }));
    }
    let steps = cfg.schedule.steps;
    for t0 in [steps / 4, 3 * steps / 4] {
        runs.push(("t0".into(), proposed, BlendConfig { mode: BlendMode::Blending, t0, w: base.w }));
    }
    for w in [0.25, 1.0] {
        runs.push(("w".into(), proposed, BlendConfig { mode: BlendMode::Blending, t0: base.t0, w }));
    }
    runs
}

/// Runs every ablation setting on shared references and writes one table.
pub fn cmd_ablate(opts: &RunOptions) -> Result<Vec<AblationRow>> {
    opts.install(|| {
        let stage = Stage::load(opts)?;
        let refs = stage.references()?;
        let world_stats = similarity_stats(&LabeledEmbeddingSet::new(stage.world.embeddings.clone(), stage.world.manifest.labels())?)?;
        let mut rows = Vec::new();
        let mut cache: Vec<((SamplingStrategy, BlendConfig), AblationRow)> = Vec::new();
        for (group, strategy, blend) in ablation_runs(&opts.config) {
            let name = run_name(strategy, &blend);
            if let Some((_, row)) = cache.iter().find(|(k, _)| *k == (strategy, blend)) {
                rows.push(AblationRow { group, ..row.clone() });
                continue;
            }
            let syn = stage.synthesize(&refs, strategy, &blend)?;
            let a = analyze(&opts.config, &stage.world, Some(&world_stats), &syn.images, &syn.labels, syn.attributes.as_deref())?;
            let attribute_intra = match &syn.attributes {
                Some(attrs) => attribute_variance(attrs, &syn.labels)?.iter().map(|b| b.intra).collect(),
                None => Vec::new(),
            };
            let row = AblationRow {
                group,
                name,
                strategy: strategy.to_string(),
                blend,
                eir: a.eir,
                intra_mean: a.synth.intra_mean,
                inter_mean: a.synth.inter_mean,
                privacy_inter_mean: a.privacy_inter_mean,
                world_intra_mean: a.world.intra_mean,
                band_variance: a.synth_band_variance,
                attribute_intra,
            };
            eprintln!("{:<10} {:<48} eir {:.3}  intra {:.3}", row.group, row.name, row.eir, row.intra_mean);
            cache.push(((strategy, blend), row.clone()));
            rows.push(row);
        }
        let dir = opts.ablation_dir();
        create_dir(&dir)?;
        write_reports(&ablation_records(&rows), &dir.join("ablation.csv"), &dir.join("ablation.json"))?;
        std::fs::write(dir.join("table.txt"), ablation_table(&rows))?;
        Ok(rows)
    })
}

pub fn ablation_records(rows: &[AblationRow]) -> Vec<MetricRecord> {
    let mut out = Vec::new();
    for r in rows {
        let p = format!("group={};strategy={};mode={};t0={};w={}", r.group, r.strategy, r.blend.mode.name(), r.blend.t0, r.blend.w);
        out.push(MetricRecord::new("eir", p.clone(), r.eir));
        out.push(MetricRecord::new("intra_mean", p.clone(), r.intra_mean));
        out.push(MetricRecord::new("inter_mean", p.clone(), r.inter_mean));
        out.push(MetricRecord::new("privacy.inter_mean", p.clone(), r.privacy_inter_mean));
        out.push(MetricRecord::new("world.intra_mean", p.clone(), r.world_intra_mean));
        for (b, v) in r.band_variance.iter().enumerate() {
            out.push(MetricRecord::new("frequency_variance", format!("{p};band={b}"), *v));
        }
        for (b, v) in Block::ALL.iter().zip(&r.attribute_intra) {
            out.push(MetricRecord::new("attribute_variance_intra", format!("{p};block={}", b.name()), *v));
        }
    }
    out
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = format!("{:<10} {:<20} {:<14} {:>5} {:>5} {:>7} {:>7} {:>7} {:>8}\n", "group", "strategy", "mode", "t0", "w", "eIR", "intra", "inter", "privacy");
    for r in rows {
        s += &format!(
            "{:<10} {:<20} {:<14} {:>5} {:>5} {:>7.3} {:>7.3} {:>7.3} {:>8.3}\n",
            r.group,
            r.strategy,
            r.blend.mode.name(),
            r.blend.t0,
            r.blend.w,
            r.eir,
            r.intra_mean,
            r.inter_mean,
            r.privacy_inter_mean
        );
    }
    s
}
