//! Pipeline configuration. Every section is optional in the file and falls
//! back to its defaults; unknown keys are rejected at every level.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::LatentCodec;
use crate::denoise::BlendConfig;
use crate::error::{Error, Result};
use crate::identity::{DEFAULT_Q_MIN, DEFAULT_TAU};
use crate::metrics::DEFAULT_BANDS;
use crate::schedule::ScheduleConfig;
use crate::stylesampler::SamplingStrategy;
use crate::worldgen::{DEFAULT_OVERLAY_AMPLITUDE, DEFAULT_TRUE_RHO};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub schedule: ScheduleConfig,
    pub render: RenderConfig,
    pub codec: LatentCodec,
    pub world: WorldConfig,
    pub sampler: SamplerConfig,
    pub blend: BlendConfig,
    pub training: TrainingConfig,
    pub filter: FilterConfig,
    pub volumes: VolumesConfig,
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    pub basis_seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { height: 32, width: 32, basis_seed: 7 }
    }
}

/// The ground-truth corpus standing in for the real training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub n_subjects: usize,
    pub images_per_subject: usize,
    pub true_rho: f64,
    pub overlay_amplitude: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_subjects: 200,
            images_per_subject: 25,
            true_rho: DEFAULT_TRUE_RHO,
            overlay_amplitude: DEFAULT_OVERLAY_AMPLITUDE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Uncontrolled,
    Replicated,
    Uniform,
    SubjectAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub strategy: StrategyKind,
    pub rho: f64,
    /// Overwrite each class's mean shape with its reference's shape.
    pub shape_replacement: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            strategy: StrategyKind::SubjectAware,
            rho: SamplingStrategy::DEFAULT_RHO,
            shape_replacement: true,
        }
    }
}

impl SamplerConfig {
    pub fn strategy(&self) -> SamplingStrategy {
        match self.strategy {
            StrategyKind::Uncontrolled => SamplingStrategy::Uncontrolled,
            StrategyKind::Replicated => SamplingStrategy::Replicated,
            StrategyKind::Uniform => SamplingStrategy::Uniform,
            StrategyKind::SubjectAware => SamplingStrategy::SubjectAware { rho: self.rho },
        }
    }

    pub fn set_strategy(&mut self, s: SamplingStrategy) {
        self.strategy = match s {
            SamplingStrategy::Uncontrolled => StrategyKind::Uncontrolled,
            SamplingStrategy::Replicated => StrategyKind::Replicated,
            SamplingStrategy::Uniform => StrategyKind::Uniform,
            SamplingStrategy::SubjectAware { rho } => {
                self.rho = rho;
                StrategyKind::SubjectAware
            }
        };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub lr: f64,
    pub batch: usize,
    pub steps: usize,
    pub dropout_p: f64,
    /// Loss is logged (and checked) every this many steps.
    pub log_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch: 128,
            steps: 5000,
            dropout_p: 0.1,
            log_every: 250,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub tau: f64,
    pub q_min: f64,
    /// Upper bound on generated reference candidates, as a multiple of the
    /// subject count.
    pub max_candidate_ratio: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU, q_min: DEFAULT_Q_MIN, max_candidate_ratio: 8 }
    }
}

/// Size of a generated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VolumesConfig {
    pub n_subjects: usize,
    pub images_per_subject: usize,
}

impl Default for VolumesConfig {
    fn default() -> Self {
        Self { n_subjects: 50, images_per_subject: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSpace {
    /// Patch-mean image descriptors (pose, shape, lighting, colour).
    Style,
    /// Identity-stub embeddings of the images.
    Identity,
    /// Ground-truth style attributes (unavailable for uncontrolled runs).
    Attributes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub extractor_seed: u64,
    pub eir_k: usize,
    pub eir_space: EmbeddingSpace,
    pub bands: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            extractor_seed: 0,
            eir_k: 3,
            eir_space: EmbeddingSpace::Style,
            bands: DEFAULT_BANDS,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Range checks that serde cannot express; reported as config errors.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let schedule = self.schedule.build().map_err(|e| Error::Config(e.to_string()))?;
        let (h, w, f) = (self.render.height, self.render.width, self.codec.factor);
        if h < 16 || w < 16 {
            return bad(format!("render size {h}x{w} below 16x16"));
        }
        if f == 0 || h % f != 0 || w % f != 0 || !(self.codec.scale > 0.0) {
            return bad(format!("codec factor {f} / scale {} incompatible with {h}x{w}", self.codec.scale));
        }
        if self.world.n_subjects == 0 || self.world.images_per_subject == 0 {
            return bad("world needs at least one subject and one image".into());
        }
        if !(0.0..=1.0).contains(&self.world.true_rho) || !(0.0..=1.0).contains(&self.sampler.rho) {
            return bad("rho values must lie in [0, 1]".into());
        }
        self.blend.validate(schedule.steps()).map_err(|e| Error::Config(e.to_string()))?;
        let t = &self.training;
        if !(t.lr > 0.0) || t.batch == 0 || !(0.0..1.0).contains(&t.dropout_p) || t.log_every == 0 {
            return bad(format!("training section out of range: {t:?}"));
        }
        if !(self.filter.tau > 0.0 && self.filter.tau <= 1.0) || self.filter.max_candidate_ratio == 0 {
            return bad(format!("filter section out of range: {:?}", self.filter));
        }
        if self.volumes.n_subjects == 0 || self.volumes.images_per_subject == 0 {
            return bad("volumes need at least one subject and one image".into());
        }
        if self.analysis.eir_k == 0 || self.analysis.bands < 2 {
            return bad(format!("analysis section out of range: {:?}", self.analysis));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn partial_document_fills_defaults() {
        let cfg = PipelineConfig::from_json(r#"{"schedule": {"T": 50}, "blend": {"mode": "style_only", "t0": 10, "w": 1.0}}"#).unwrap();
        assert_eq!(cfg.schedule.steps, 50);
        assert_eq!(cfg.schedule.beta_end, 0.02);
        assert_eq!(cfg.training.lr, 1e-4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for doc in [r#"{"trainng": {}}"#, r#"{"training": {"learning_rate": 0.1}}"#, r#"{"render": {"h": 32}}"#] {
            assert!(matches!(PipelineConfig::from_json(doc), Err(Error::Config(_))), "{doc}");
        }
    }

    #[test]
    fn out_of_range_values_are_config_errors() {
        for doc in [r#"{"blend": {"mode": "blending", "t0": 2000, "w": 0.5}}"#, r#"{"training": {"dropout_p": 1.0}}"#, r#"{"render": {"H": 30}}"#] {
            assert!(matches!(PipelineConfig::from_json(doc), Err(Error::Config(_))), "{doc}");
        }
    }
}
