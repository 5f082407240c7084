//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "UKANCKPT" | version u8
//! config text: len u64, UTF-8 bytes
//! epoch u64
//! rng: seed [u8; 32], stream u64, word position u128
//! parameters: count u64, then per tensor: name (len u64 + bytes), rank u64,
//!             dims u64 each, values f64 each
//! optimizer: tag u8 (0 = sgd, 1 = adam); adam adds step u64 and the first
//!            and second moments as unnamed tensors in parameter order
//! ```

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use ukan_core::{AdamState, Model, Tensor};

use crate::config::{ConfigError, RunConfig};

pub const MAGIC: &[u8; 8] = b"UKANCKPT";
pub const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic bytes)")]
    Magic,
    #[error("unsupported checkpoint version {found} (expected {VERSION})")]
    Version { found: u8 },
    #[error("truncated checkpoint at byte {offset}")]
    Truncated { offset: usize },
    #[error("malformed checkpoint at byte {offset}: {detail}")]
    Malformed { offset: usize, detail: String },
    #[error("checkpoint config is invalid: {0}")]
    Config(#[from] ConfigError),
    #[error("parameter mismatch: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Sgd,
    Adam(AdamState),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub epoch: u64,
    pub rng: RngState,
    pub parameters: Vec<(String, Tensor)>,
    pub optimizer: OptimizerState,
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    put_u64(out, bytes.len() as u64);
    out.extend_from_slice(bytes);
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) {
    put_u64(out, t.rank() as u64);
    for &d in t.shape() {
        put_u64(out, d as u64);
    }
    for v in t.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated { offset: self.pos })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self, what: &str) -> Result<usize, CheckpointError> {
        let offset = self.pos;
        let n = self.u64()?;
        // Every counted item occupies at least one byte, which bounds lengths
        // by what is left and keeps corrupt counts from allocating.
        if n > (self.bytes.len() - self.pos) as u64 {
            return Err(CheckpointError::Malformed {
                offset,
                detail: format!("{what} length {n} exceeds remaining bytes"),
            });
        }
        Ok(n as usize)
    }

    fn string(&mut self, what: &str) -> Result<String, CheckpointError> {
        let n = self.len(what)?;
        let offset = self.pos;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| CheckpointError::Malformed {
            offset,
            detail: format!("{what} is not UTF-8: {e}"),
        })
    }

    fn tensor(&mut self) -> Result<Tensor, CheckpointError> {
        let offset = self.pos;
        let rank = self.len("rank")?;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u64()? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&c| c.checked_mul(8).is_some_and(|b| b <= self.bytes.len() - self.pos))
            .ok_or_else(|| CheckpointError::Malformed {
                offset,
                detail: format!("tensor shape {shape:?} exceeds remaining bytes"),
            })?;
        let values = self
            .take(count * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape, values).map_err(|e| CheckpointError::Malformed {
            offset,
            detail: e.to_string(),
        })
    }
}

impl Checkpoint {
    /// Snapshot of `model` and the optimizer after `epoch` completed epochs.
    pub fn capture(
        config: &RunConfig,
        epoch: u64,
        rng: &ChaCha8Rng,
        model: &Model,
        optimizer: &OptimizerState,
    ) -> Self {
        Checkpoint {
            config: config.clone(),
            epoch,
            rng: RngState::capture(rng),
            parameters: model
                .named_parameters()
                .into_iter()
                .map(|(n, t)| (n, t.detach()))
                .collect(),
            optimizer: optimizer.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        put_bytes(&mut out, self.config.to_text().as_bytes());
        put_u64(&mut out, self.epoch);
        out.extend_from_slice(&self.rng.seed);
        put_u64(&mut out, self.rng.stream);
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        put_u64(&mut out, self.parameters.len() as u64);
        for (name, t) in &self.parameters {
            put_bytes(&mut out, name.as_bytes());
            put_tensor(&mut out, t);
        }
        match &self.optimizer {
            OptimizerState::Sgd => out.push(0),
            OptimizerState::Adam(state) => {
                out.push(1);
                put_u64(&mut out, state.t);
                for t in state.m.iter().chain(&state.v) {
                    put_tensor(&mut out, t);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len()).map_err(|_| CheckpointError::Magic)? != MAGIC {
            return Err(CheckpointError::Magic);
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(CheckpointError::Version { found: version });
        }
        let config = RunConfig::parse(&r.string("config")?)?;
        let epoch = r.u64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
        let count = r.len("parameter count")?;
        let mut parameters = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string("parameter name")?;
            parameters.push((name, r.tensor()?));
        }
        let offset = r.pos;
        let optimizer = match r.u8()? {
            0 => OptimizerState::Sgd,
            1 => {
                let t = r.u64()?;
                let m = (0..count).map(|_| r.tensor()).collect::<Result<_, _>>()?;
                let v = (0..count).map(|_| r.tensor()).collect::<Result<_, _>>()?;
                OptimizerState::Adam(AdamState { m, v, t })
            }
            tag => {
                return Err(CheckpointError::Malformed {
                    offset,
                    detail: format!("unknown optimizer tag {tag}"),
                })
            }
        };
        if r.pos != bytes.len() {
            return Err(CheckpointError::Malformed {
                offset: r.pos,
                detail: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(Checkpoint {
            config,
            epoch,
            rng: RngState {
                seed,
                stream,
                word_pos,
            },
            parameters,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Rebuilds the model described by the config echo and fills in the
    /// stored parameters. Names and shapes must match exactly.
    pub fn restore_model(&self) -> Result<Model, CheckpointError> {
        let mut model = crate::train::build_model(&self.config, &mut self.rng.restore())
            .map_err(|e| CheckpointError::Mismatch(e.to_string()))?;
        let expected = model.named_parameters();
        if expected.len() != self.parameters.len() {
            return Err(CheckpointError::Mismatch(format!(
                "model has {} parameter tensors, checkpoint has {}",
                expected.len(),
                self.parameters.len()
            )));
        }
        for ((name, t), (stored_name, stored)) in expected.iter().zip(&self.parameters) {
            if name != stored_name || t.shape() != stored.shape() {
                return Err(CheckpointError::Mismatch(format!(
                    "expected {name} {:?}, found {stored_name} {:?}",
                    t.shape(),
                    stored.shape()
                )));
            }
        }
        if let OptimizerState::Adam(state) = &self.optimizer {
            let ok = state.m.len() == expected.len()
                && state.v.len() == expected.len()
                && expected
                    .iter()
                    .zip(state.m.iter().zip(&state.v))
                    .all(|((_, p), (m, v))| m.shape() == p.shape() && v.shape() == p.shape());
            if !ok {
                return Err(CheckpointError::Mismatch("optimizer state does not match parameters".into()));
            }
        }
        drop(expected);
        let values: Vec<Tensor> = self.parameters.iter().map(|(_, t)| t.clone()).collect();
        model
            .load_parameters(&values)
            .map_err(|e| CheckpointError::Mismatch(e.to_string()))?;
        Ok(model)
    }
}
