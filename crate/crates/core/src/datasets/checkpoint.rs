//! Model checkpoints: all parameters as one flat f32 tensor, with the
//! architecture and schedule in the metadata record.

use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::tensor::TensorFile;
use crate::denoise::{Generator, GeneratorShape};
use crate::error::{Error, Result};
use crate::nn::Parameters;
use crate::rng::substream;
use crate::schedule::ScheduleConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub version: u32,
    pub shape: GeneratorShape,
    pub schedule: ScheduleConfig,
    pub parameter_count: usize,
    pub steps_trained: usize,
}

pub fn save_checkpoint(path: &Path, model: &Generator<f32>, schedule: ScheduleConfig, steps_trained: usize) -> Result<()> {
    let meta = CheckpointMeta {
        version: CHECKPOINT_VERSION,
        shape: model.shape(),
        schedule,
        parameter_count: model.parameter_count(),
        steps_trained,
    };
    TensorFile::f32(Array1::from(model.flatten()).into_dyn())
        .with_metadata(serde_json::to_value(&meta)?)
        .write(path)
}

pub fn load_checkpoint(path: &Path) -> Result<(Generator<f32>, CheckpointMeta)> {
    let file = TensorFile::read(path)?;
    let meta: CheckpointMeta = match &file.metadata {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Manifest(format!("{}: checkpoint metadata: {e}", path.display())))?,
        None => return Err(Error::Manifest(format!("{}: checkpoint has no metadata", path.display()))),
    };
    if meta.version != CHECKPOINT_VERSION {
        return Err(Error::Manifest(format!("checkpoint version {} (expected {CHECKPOINT_VERSION})", meta.version)));
    }
    let flat = file.into_f32()?;
    let mut model = Generator::<f32>::new(&meta.shape, &mut substream(0, 0, 0, 0));
    if !model.load_flat(flat.as_slice().expect("standard layout")) {
        return Err(Error::Manifest(format!(
            "checkpoint holds {} parameters, architecture needs {}",
            flat.len(),
            model.parameter_count()
        )));
    }
    Ok((model, meta))
}
