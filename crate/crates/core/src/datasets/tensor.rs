//! Bit-exact tensor container.
//!
//! Layout: magic `MFT1`, dtype byte (1 = f32 LE, 2 = f64 LE), ndim byte,
//! `ndim` u64 LE dims, row-major payload, then optionally a u32 LE length
//! and that many bytes of UTF-8 JSON metadata.

use std::io::Write;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde_json::Value;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MFT1";

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(ArrayD<f32>),
    F64(ArrayD<f64>),
}

impl TensorData {
    fn code(&self) -> u8 {
        match self {
            TensorData::F32(_) => 1,
            TensorData::F64(_) => 2,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            TensorData::F32(a) => a.shape(),
            TensorData::F64(a) => a.shape(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub data: TensorData,
    pub metadata: Option<Value>,
}

impl TensorFile {
    pub fn f32(data: ArrayD<f32>) -> Self {
        Self { data: TensorData::F32(data), metadata: None }
    }

    pub fn f64(data: ArrayD<f64>) -> Self {
        Self { data: TensorData::F64(data), metadata: None }
    }

    pub fn with_metadata(mut self, metadata: Value) -> Self {
        self.metadata = Some(metadata);
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = self.data.shape();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(self.data.code());
        out.push(shape.len() as u8);
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        // `iter()` walks in logical row-major order whatever the memory layout.
        match &self.data {
            TensorData::F32(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            TensorData::F64(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        }
        if let Some(meta) = &self.metadata {
            let text = serde_json::to_vec(meta).expect("metadata serializes");
            out.extend_from_slice(&(text.len() as u32).to_le_bytes());
            out.extend_from_slice(&text);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(parse(0, format!("bad magic {magic:?}")));
        }
        let dtype = r.take(1, "dtype")?[0];
        let elem = match dtype {
            1 => 4,
            2 => 8,
            other => return Err(parse(4, format!("unknown dtype code {other}"))),
        };
        let ndim = r.take(1, "ndim")?[0] as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let at = r.pos;
            let d = u64::from_le_bytes(r.take(8, "dims")?.try_into().unwrap());
            dims.push(usize::try_from(d).map_err(|_| parse(at as u64, format!("dimension {d} does not fit in memory")))?);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(elem).map(|b| (n, b)));
        let Some((count, payload_len)) = count else {
            return Err(parse(6, format!("dimension product {dims:?} overflows")));
        };
        let payload_at = r.pos;
        let payload = r.take(payload_len, "payload")?;
        let data = match dtype {
            1 => {
                let v: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                TensorData::F32(ArrayD::from_shape_vec(IxDyn(&dims), v).map_err(|e| parse(payload_at as u64, e.to_string()))?)
            }
            _ => {
                let v: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                TensorData::F64(ArrayD::from_shape_vec(IxDyn(&dims), v).map_err(|e| parse(payload_at as u64, e.to_string()))?)
            }
        };
        debug_assert_eq!(data.shape().iter().product::<usize>(), count);
        let metadata = if r.pos == bytes.len() {
            None
        } else {
            let len = u32::from_le_bytes(r.take(4, "metadata length")?.try_into().unwrap()) as usize;
            let at = r.pos;
            let text = r.take(len, "metadata")?;
            let value = serde_json::from_slice(text).map_err(|e| parse(at as u64, format!("metadata is not JSON: {e}")))?;
            if r.pos != bytes.len() {
                return Err(parse(r.pos as u64, format!("{} trailing bytes", bytes.len() - r.pos)));
            }
            Some(value)
        };
        Ok(Self { data, metadata })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Shape from the header alone.
    pub fn read_shape(path: &Path) -> Result<Vec<usize>> {
        use std::io::Read;
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let mut f = std::fs::File::open(path)?;
        let mut head = [0u8; 6];
        f.read_exact(&mut head).map_err(|_| parse(0, "file shorter than the 6-byte header".into()))?;
        if &head[..4] != MAGIC {
            return Err(parse(0, format!("bad magic {:?}", &head[..4])));
        }
        let mut dims = vec![0u8; 8 * head[5] as usize];
        f.read_exact(&mut dims).map_err(|_| parse(6, "truncated dims".into()))?;
        Ok(dims.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize).collect())
    }

    pub fn into_f32(self) -> Result<ArrayD<f32>> {
        match self.data {
            TensorData::F32(a) => Ok(a),
            TensorData::F64(_) => Err(Error::Parse { offset: 4, message: "expected f32 payload, found f64".into() }),
        }
    }

    pub fn into_f64(self) -> Result<ArrayD<f64>> {
        match self.data {
            TensorData::F64(a) => Ok(a),
            TensorData::F32(_) => Err(Error::Parse { offset: 4, message: "expected f64 payload, found f32".into() }),
        }
    }
}

fn parse(offset: u64, message: String) -> Error {
    Error::Parse { offset, message }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            parse(self.pos as u64, format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}

pub fn write_f32<D: ndarray::Dimension>(path: &Path, a: &ndarray::Array<f32, D>, metadata: Option<Value>) -> Result<()> {
    let mut t = TensorFile::f32(a.clone().into_dyn());
    t.metadata = metadata;
    t.write(path)
}

pub fn write_f64<D: ndarray::Dimension>(path: &Path, a: &ndarray::Array<f64, D>, metadata: Option<Value>) -> Result<()> {
    let mut t = TensorFile::f64(a.clone().into_dyn());
    t.metadata = metadata;
    t.write(path)
}

/// Reads an f32 tensor and checks its rank.
pub fn read_f32<D: ndarray::Dimension>(path: &Path) -> Result<ndarray::Array<f32, D>> {
    let a = TensorFile::read(path)?.into_f32()?;
    let shape = a.shape().to_vec();
    a.into_dimensionality::<D>()
        .map_err(|_| parse(5, format!("{}: rank {} does not match the expected rank", path.display(), shape.len())))
}

pub fn read_f64<D: ndarray::Dimension>(path: &Path) -> Result<ndarray::Array<f64, D>> {
    let a = TensorFile::read(path)?.into_f64()?;
    let shape = a.shape().to_vec();
    a.into_dimensionality::<D>()
        .map_err(|_| parse(5, format!("{}: rank {} does not match the expected rank", path.display(), shape.len())))
}
