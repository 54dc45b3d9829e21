use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::autograd::{Element, Real, Tensor};
use crate::models::Model;

const MAGIC: &[u8; 8] = b"AKDCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("checkpoint has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("checkpoint is malformed: {0}")]
    Malformed(String),
    #[error("checkpoint parameter {index} has shape {found:?}, model expects {expected:?}")]
    ShapeMismatch {
        index: usize,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint holds {found} parameter tensors, model has {expected}")]
    ParamCount { expected: usize, found: usize },
    #[error("checkpoint was written for {found}, model is {expected}")]
    SpecMismatch { expected: String, found: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    /// Annealed logit matching.
    One,
    /// Hard-target fine-tuning.
    Two,
    /// Single-stage methods (scratch, vanilla KD).
    Single,
}

impl Stage {
    fn tag(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
            Stage::Single => 0,
        }
    }

    fn from_tag(tag: u8) -> Option<Stage> {
        match tag {
            1 => Some(Stage::One),
            2 => Some(Stage::Two),
            0 => Some(Stage::Single),
            _ => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::One => "I",
            Stage::Two => "II",
            Stage::Single => "single",
        })
    }
}

/// Where in training a snapshot was taken and how it scored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub stage: Stage,
    pub temperature: f64,
    /// Value of the selection criterion at save time.
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub descriptor: String,
    pub meta: CheckpointMeta,
    pub params: Vec<Tensor>,
}

impl Checkpoint {
    pub fn of_model(model: &Model, meta: CheckpointMeta) -> Self {
        Checkpoint {
            descriptor: model.spec().descriptor(),
            meta,
            params: model.params().to_vec(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.descriptor.len() as u32).to_le_bytes());
        out.extend_from_slice(self.descriptor.as_bytes());
        out.extend_from_slice(&(self.meta.epoch as u64).to_le_bytes());
        out.push(self.meta.stage.tag());
        out.extend_from_slice(&self.meta.temperature.to_le_bytes());
        out.extend_from_slice(&self.meta.metric.to_le_bytes());
        out.push(Real::BYTES as u8);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&(p.shape().len() as u32).to_le_bytes());
            for &d in p.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in p.data() {
                v.write_le(&mut out);
            }
        }
        out
    }

    /// Parses a complete checkpoint; nothing is returned unless every byte
    /// is accounted for.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let len = r.u32()? as usize;
        let descriptor = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| CheckpointError::Malformed("descriptor is not UTF-8".into()))?;
        let epoch = r.u64()? as usize;
        let stage = Stage::from_tag(r.take(1)?[0])
            .ok_or_else(|| CheckpointError::Malformed("unknown stage tag".into()))?;
        let temperature = r.f64()?;
        let metric = r.f64()?;
        let width = r.take(1)?[0] as usize;
        if width != 4 && width != 8 {
            return Err(CheckpointError::Malformed(format!("scalar width {width}")));
        }
        let count = r.u32()? as usize;
        let mut params = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let rank = r.u32()? as usize;
            if rank == 0 || rank > 8 {
                return Err(CheckpointError::Malformed(format!("tensor rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&n| n > 0)
                .ok_or_else(|| CheckpointError::Malformed(format!("tensor shape {shape:?}")))?;
            let raw = r.take(numel.checked_mul(width).ok_or(CheckpointError::Truncated {
                offset: r.pos,
                needed: usize::MAX,
            })?)?;
            let data: Vec<Real> = raw
                .chunks_exact(width)
                .map(|c| {
                    if width == 4 {
                        Real::of(f32::read_le(c) as f64)
                    } else {
                        Real::of(f64::read_le(c))
                    }
                })
                .collect();
            params.push(Tensor::new(shape, data).map_err(|e| CheckpointError::Malformed(e.to_string()))?);
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(Checkpoint {
            descriptor,
            meta: CheckpointMeta {
                epoch,
                stage,
                temperature,
                metric,
            },
            params,
        })
    }

    /// Copies the stored parameters into `model` after checking they fit.
    pub fn apply(&self, model: &mut Model) -> Result<(), CheckpointError> {
        let info = model.param_info();
        if info.len() != self.params.len() {
            return Err(CheckpointError::ParamCount {
                expected: info.len(),
                found: self.params.len(),
            });
        }
        for (i, (pi, p)) in info.iter().zip(&self.params).enumerate() {
            if pi.shape != p.shape() {
                return Err(CheckpointError::ShapeMismatch {
                    index: i,
                    expected: pi.shape.clone(),
                    found: p.shape().to_vec(),
                });
            }
        }
        let expected = model.spec().descriptor();
        if expected != self.descriptor {
            return Err(CheckpointError::SpecMismatch {
                expected,
                found: self.descriptor.clone(),
            });
        }
        model
            .set_params(self.params.clone())
            .map_err(|e| CheckpointError::Malformed(e.to_string()))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let left = self.bytes.len() - self.pos;
        if n > left {
            return Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: n - left,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::read_le(self.take(8)?))
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    fs::write(path, ckpt.to_bytes()).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Activation, ModelSpec};

    fn sample() -> (Model, Checkpoint) {
        let m = Model::build(&ModelSpec::mlp(&[2, 5, 3], Activation::Relu, 4)).unwrap();
        let meta = CheckpointMeta {
            epoch: 7,
            stage: Stage::Two,
            temperature: 1.0,
            metric: 0.625,
        };
        let c = Checkpoint::of_model(&m, meta);
        (m, c)
    }

    #[test]
    fn bytes_round_trip() {
        let (_, c) = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncation_and_trailing_are_distinct() {
        let (_, c) = sample();
        let bytes = c.to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 1]),
            Err(CheckpointError::Truncated { .. })
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            Checkpoint::from_bytes(&extra),
            Err(CheckpointError::TrailingBytes(1))
        ));
    }

    #[test]
    fn version_and_magic_checked() {
        let (_, c) = sample();
        let mut bytes = c.to_bytes();
        bytes[8] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::Version { found: 9, .. })
        ));
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn wrong_model_is_a_shape_mismatch() {
        let (_, c) = sample();
        let mut other = Model::build(&ModelSpec::mlp(&[2, 6, 3], Activation::Relu, 4)).unwrap();
        assert!(matches!(
            c.apply(&mut other),
            Err(CheckpointError::ShapeMismatch { index: 0, .. })
        ));
    }

    #[test]
    fn apply_restores_parameters() {
        let (m, c) = sample();
        let mut fresh = Model::build(&m.spec().clone().with_seed(99)).unwrap();
        assert_ne!(fresh.params(), m.params());
        c.apply(&mut fresh).unwrap();
        assert_eq!(fresh.params(), m.params());
    }
}
