//! Binary checkpoint container.
//!
//! ```text
//! "PHDC" | version u32 | sha256(config json) [32] | config len u64 | config json
//! epoch u64 | tensor count u32 | tensors
//! adam step u64 | moment count u32 | m tensors | v tensors
//! rng seed [32] | rng stream u64 | rng word position u128
//! ```
//!
//! A tensor record is `name len u32 | name | rank u32 | dims u64... | f64...`;
//! all integers and floats are little-endian.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::TrainConfig;
use crate::autodiff::Tensor;
use crate::gnn::{EncoderConfig, EncoderParams};
use crate::seed::sha256_hex;

pub const MAGIC: &[u8; 4] = b"PHDC";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("unexpected end of file")]
    UnexpectedEof,
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos() }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ConfigEcho {
    encoder: EncoderConfig,
    train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    /// Completed epochs.
    pub epoch: u64,
    /// Encoder parameters, then any auxiliary head.
    pub tensors: Vec<(String, Tensor)>,
    pub optimizer: OptimizerState,
    pub rng: RngState,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) {
    put_u32(out, t.shape().len() as u32);
    for &d in t.shape() {
        put_u64(out, d as u64);
    }
    for &x in t.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::UnexpectedEof)?;
        let slice = self.bytes.get(self.pos..end).ok_or(CheckpointError::UnexpectedEof)?;
        self.pos = end;
        Ok(slice)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn len(&mut self) -> Result<usize, CheckpointError> {
        usize::try_from(self.u64()?).map_err(|_| CheckpointError::Corrupt("length overflows usize".into()))
    }

    fn tensor(&mut self) -> Result<Tensor, CheckpointError> {
        let rank = self.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(self.len()?);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| CheckpointError::Corrupt(format!("shape {shape:?} overflows")))?;
        let raw = self.take(numel.checked_mul(8).ok_or(CheckpointError::UnexpectedEof)?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Tensor::new(shape, data).map_err(|e| CheckpointError::Corrupt(e.to_string()))
    }
}

impl Checkpoint {
    fn config_json(&self) -> Vec<u8> {
        let echo = ConfigEcho { encoder: self.encoder.clone(), train: self.train.clone() };
        serde_json::to_vec(&echo).expect("config serializes")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        let config = self.config_json();
        out.extend_from_slice(&Sha256::digest(&config));
        put_u64(&mut out, config.len() as u64);
        out.extend_from_slice(&config);
        put_u64(&mut out, self.epoch);
        put_u32(&mut out, self.tensors.len() as u32);
        for (name, t) in &self.tensors {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_tensor(&mut out, t);
        }
        put_u64(&mut out, self.optimizer.step);
        put_u32(&mut out, self.optimizer.m.len() as u32);
        for t in self.optimizer.m.iter().chain(&self.optimizer.v) {
            put_tensor(&mut out, t);
        }
        out.extend_from_slice(&self.rng.seed);
        put_u64(&mut out, self.rng.stream);
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let digest: [u8; 32] = r.array()?;
        let config_len = r.len()?;
        let config = r.take(config_len)?;
        if Sha256::digest(config).as_slice() != digest {
            return Err(CheckpointError::Corrupt("config digest mismatch".into()));
        }
        let echo: ConfigEcho =
            serde_json::from_slice(config).map_err(|e| CheckpointError::Corrupt(format!("config: {e}")))?;
        let epoch = r.u64()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| CheckpointError::Corrupt("tensor name is not UTF-8".into()))?
                .to_string();
            tensors.push((name, r.tensor()?));
        }
        let step = r.u64()?;
        let moments = r.u32()? as usize;
        let m = (0..moments).map(|_| r.tensor()).collect::<Result<Vec<_>, _>>()?;
        let v = (0..moments).map(|_| r.tensor()).collect::<Result<Vec<_>, _>>()?;
        let rng = RngState { seed: r.array()?, stream: r.u64()?, word_pos: u128::from_le_bytes(r.array()?) };
        if r.pos != bytes.len() {
            return Err(CheckpointError::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let ck = Self {
            encoder: echo.encoder,
            train: echo.train,
            epoch,
            tensors,
            optimizer: OptimizerState { step, m, v },
            rng,
        };
        ck.check_shapes()?;
        Ok(ck)
    }

    fn check_shapes(&self) -> Result<(), CheckpointError> {
        let expected = EncoderParams::init(&self.encoder, &mut ChaCha8Rng::seed_from_u64(0));
        for p in expected.iter() {
            let t =
                self.tensor(&p.name).ok_or_else(|| CheckpointError::Corrupt(format!("missing tensor {}", p.name)))?;
            if t.shape() != p.value.shape() {
                return Err(CheckpointError::Corrupt(format!(
                    "tensor {} has shape {:?}, config implies {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
        }
        if !self.optimizer.m.is_empty() {
            if self.optimizer.m.len() != self.tensors.len() {
                return Err(CheckpointError::Corrupt("optimizer state does not match tensors".into()));
            }
            for ((_, t), (m, v)) in self.tensors.iter().zip(self.optimizer.m.iter().zip(&self.optimizer.v)) {
                if m.shape() != t.shape() || v.shape() != t.shape() {
                    return Err(CheckpointError::Corrupt("optimizer moment shape mismatch".into()));
                }
            }
        }
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Encoder parameters with zeroed gradient buffers.
    pub fn encoder_params(&self) -> Result<EncoderParams, CheckpointError> {
        let mut params = EncoderParams::init(&self.encoder, &mut ChaCha8Rng::seed_from_u64(0));
        for p in params.iter_mut() {
            let t =
                self.tensor(&p.name).ok_or_else(|| CheckpointError::Corrupt(format!("missing tensor {}", p.name)))?;
            if t.shape() != p.value.shape() {
                return Err(CheckpointError::Corrupt(format!("tensor {} has the wrong shape", p.name)));
            }
            p.value = t.clone();
        }
        Ok(params)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn digest(&self) -> String {
        sha256_hex(&self.to_bytes())
    }

    /// Writes through a temporary file in the same directory, then renames.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io { path: path.to_path_buf(), source };
    let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}
