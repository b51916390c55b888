//! JSON record of a dataset directory. Tensors are stored batched; records
//! point at a file and a row within it.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::TensorFile;
use crate::denoise::BlendConfig;
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::stylemodel::attributes::SHAPE_DIM;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    World,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRef {
    pub file: String,
    pub row: usize,
}

impl TensorRef {
    pub fn new(file: &str, row: usize) -> Self {
        Self { file: file.to_string(), row }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub strategy: String,
    pub rho: Option<f64>,
    pub blend: Option<BlendConfig>,
    pub tau: Option<f64>,
    pub q_min: Option<f64>,
    pub shape_replacement: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectRecord {
    pub class_id: u64,
    pub reference: TensorRef,
    pub c_id: TensorRef,
    /// Ground-truth shape block: the class mean for a world, the
    /// reference's rendered shape for a synthetic set.
    pub shape: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRecord {
    pub image: TensorRef,
    pub class_id: u64,
    pub attributes: Option<TensorRef>,
    pub key: StreamKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub kind: DatasetKind,
    pub seed: u64,
    pub settings: Settings,
    /// `[channels, height, width]`.
    pub image_shape: [usize; 3],
    pub subjects: Vec<SubjectRecord>,
    pub images: Vec<ImageRecord>,
}

impl DatasetManifest {
    /// Referential integrity against the files in `dir`.
    pub fn validate(&self, dir: &Path) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!("version {} (expected {MANIFEST_VERSION})", self.version)));
        }
        let mut ids = BTreeSet::new();
        for s in &self.subjects {
            if !ids.insert(s.class_id) {
                return Err(Error::Manifest(format!("duplicate subject record for class {}", s.class_id)));
            }
            if s.shape.len() != SHAPE_DIM {
                return Err(Error::Manifest(format!("class {}: shape block has {} entries", s.class_id, s.shape.len())));
            }
        }
        if let Some(bad) = self.images.iter().find(|r| !ids.contains(&r.class_id)) {
            return Err(Error::Manifest(format!("image {:?} names class {} with no subject record", bad.image, bad.class_id)));
        }
        let mut rows: HashMap<&str, usize> = HashMap::new();
        let refs = self
            .subjects
            .iter()
            .flat_map(|s| [&s.reference, &s.c_id])
            .chain(self.images.iter().flat_map(|r| std::iter::once(&r.image).chain(r.attributes.as_ref())));
        for r in refs {
            let n = match rows.get(r.file.as_str()) {
                Some(&n) => n,
                None => {
                    let path = dir.join(&r.file);
                    if !path.is_file() {
                        return Err(Error::Manifest(format!("referenced file {} does not exist", path.display())));
                    }
                    let n = TensorFile::read_shape(&path)?.first().copied().unwrap_or(0);
                    rows.insert(&r.file, n);
                    n
                }
            };
            if r.row >= n {
                return Err(Error::Manifest(format!("{} row {} out of range ({n} rows)", r.file, r.row)));
            }
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.validate(dir)?;
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(Error::MissingArtifact(path));
        }
        let m: Self = serde_json::from_slice(&std::fs::read(&path)?).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        m.validate(dir)?;
        Ok(m)
    }

    pub fn labels(&self) -> Vec<u64> {
        self.images.iter().map(|r| r.class_id).collect()
    }
}
