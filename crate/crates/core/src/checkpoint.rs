//! Binary checkpoints.
//!
//! Layout: `NSTKCKPT`, u32 format version, u64 header length, a JSON header,
//! raw f32 little-endian blobs in header order, then the SHA-256 of every
//! preceding byte.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::rmt::{Mode, RmtConfig, RmtModel};
use crate::tensor::Tensor;
use crate::tokenizer::{Tokenizer, TokenizerFile};
use crate::train::{OptimState, TrainState};

pub const MAGIC: &[u8; 8] = b"NSTKCKPT";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 8 + 4 + 8;
const DIGEST: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub step: usize,
    pub stage: usize,
    pub stage_step: usize,
    pub best_acc: f64,
    pub since_best: usize,
    pub finished: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Group {
    Param,
    AdamM,
    AdamV,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BlobHeader {
    name: String,
    group: Group,
    shape: Vec<usize>,
    dtype: String,
    offset: usize,
    len: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    model: ModelConfig,
    rmt: RmtConfig,
    mode: Mode,
    curriculum: Vec<usize>,
    progress: Progress,
    optim_step: Option<u64>,
    rng: Option<ChaCha8Rng>,
    tokenizer: TokenizerFile,
    blobs: Vec<BlobHeader>,
}

/// A trained model plus, optionally, everything needed to resume training.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub rmt: RmtConfig,
    pub mode: Mode,
    pub curriculum: Vec<usize>,
    pub tokenizer: TokenizerFile,
    pub params: Vec<(String, Tensor<f32>)>,
    pub optim: Option<OptimState<f32>>,
    pub rng: Option<ChaCha8Rng>,
    pub progress: Progress,
}

impl Checkpoint {
    pub fn from_state(state: &TrainState, mode: Mode, tok: &Tokenizer, curriculum: &[usize]) -> Self {
        let store = &state.model.lm.params;
        Self {
            model: state.model.lm.config.clone(),
            rmt: state.model.config.clone(),
            mode,
            curriculum: curriculum.to_vec(),
            tokenizer: tok.to_file(),
            params: store.iter().map(|(n, t)| (n.to_string(), t.clone())).collect(),
            optim: Some(state.opt.clone()),
            rng: Some(state.rng.clone()),
            progress: Progress {
                step: state.step,
                stage: state.stage,
                stage_step: state.stage_step,
                best_acc: state.best_acc,
                since_best: state.since_best,
                finished: state.finished,
            },
        }
    }

    /// Rebuilds the model and overwrites every parameter; names and shapes
    /// must match the architecture exactly.
    pub fn build_model(&self) -> Result<RmtModel<f32>> {
        let mut model = RmtModel::<f32>::new(self.model.clone(), self.rmt.clone())?;
        let store = &mut model.lm.params;
        if store.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "architecture has {} parameters, checkpoint has {}",
                store.len(),
                self.params.len()
            )));
        }
        for (name, t) in &self.params {
            let id = store
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected parameter `{name}`")))?;
            let dst = store.get_mut(id);
            if dst.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, architecture expects {:?}",
                    t.shape(),
                    dst.shape()
                )));
            }
            *dst = t.clone();
        }
        Ok(model)
    }

    pub fn tokenizer(&self) -> Result<Tokenizer> {
        Tokenizer::from_file(self.tokenizer.clone())
    }

    /// The full training state. Fails for weights-only checkpoints.
    pub fn to_state(&self) -> Result<TrainState> {
        let model = self.build_model()?;
        let (Some(opt), Some(rng)) = (&self.optim, &self.rng) else {
            return Err(Error::Checkpoint("checkpoint holds no optimizer or rng state".into()));
        };
        // Moments are stored in parameter-store order.
        let names = model.lm.params.names();
        let order: Vec<usize> = names
            .iter()
            .map(|n| self.params.iter().position(|(m, _)| m == n).expect("checked by build_model"))
            .collect();
        let opt = OptimState {
            m: order.iter().map(|&i| opt.m[i].clone()).collect(),
            v: order.iter().map(|&i| opt.v[i].clone()).collect(),
            step: opt.step,
        };
        for (i, t) in model.lm.params.tensors().iter().enumerate() {
            if opt.m[i].shape() != t.shape() || opt.v[i].shape() != t.shape() {
                return Err(Error::Checkpoint(format!("optimizer moments of `{}` do not match", names[i])));
            }
        }
        let p = self.progress;
        Ok(TrainState {
            model,
            opt,
            rng: rng.clone(),
            step: p.step,
            stage: p.stage,
            stage_step: p.stage_step,
            best_acc: p.best_acc,
            since_best: p.since_best,
            finished: p.finished,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut blobs = Vec::new();
        let mut arrays: Vec<&Tensor<f32>> = Vec::new();
        let mut offset = 0;
        let mut add = |name: &str, group: Group, t: &Tensor<f32>, blobs: &mut Vec<BlobHeader>| {
            blobs.push(BlobHeader {
                name: name.to_string(),
                group,
                shape: t.shape().to_vec(),
                dtype: "f32le".into(),
                offset,
                len: t.numel(),
            });
            offset += t.numel() * 4;
        };
        for (n, t) in &self.params {
            add(n, Group::Param, t, &mut blobs);
            arrays.push(t);
        }
        if let Some(opt) = &self.optim {
            if opt.m.len() != self.params.len() || opt.v.len() != self.params.len() {
                return Err(Error::Checkpoint("optimizer state does not match parameters".into()));
            }
            for (group, moments) in [(Group::AdamM, &opt.m), (Group::AdamV, &opt.v)] {
                for ((n, _), t) in self.params.iter().zip(moments) {
                    add(n, group, t, &mut blobs);
                    arrays.push(t);
                }
            }
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            model: self.model.clone(),
            rmt: self.rmt.clone(),
            mode: self.mode,
            curriculum: self.curriculum.clone(),
            progress: self.progress,
            optim_step: self.optim.as_ref().map(|o| o.step),
            rng: self.rng.clone(),
            tokenizer: self.tokenizer.clone(),
            blobs,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(PREAMBLE + json.len() + offset + DIGEST);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in arrays {
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::Checkpoint(format!("truncated or corrupted file: {m}"));
        if bytes.len() < PREAMBLE + DIGEST {
            return Err(corrupt("shorter than the fixed preamble"));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch"));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let data_start = PREAMBLE
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| corrupt("header length exceeds file"))?;
        let header: Header = serde_json::from_slice(&body[PREAMBLE..data_start])
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        if header.format_version != version {
            return Err(Error::Checkpoint("header and preamble disagree on the format version".into()));
        }
        let data = &body[data_start..];
        let mut expected = 0;
        let mut params = Vec::new();
        let (mut m, mut v) = (Vec::new(), Vec::new());
        for b in &header.blobs {
            let numel: usize = b.shape.iter().product();
            if b.dtype != "f32le" || numel != b.len || b.offset != expected {
                return Err(Error::Checkpoint(format!(
                    "inconsistent shape header for `{}` ({:?}, len {}, offset {})",
                    b.name, b.shape, b.len, b.offset
                )));
            }
            let end = expected + 4 * b.len;
            let raw = data
                .get(expected..end)
                .ok_or_else(|| corrupt("blob extends past the end of the data"))?;
            let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            let t = Tensor::new(b.shape.clone(), values)?;
            match b.group {
                Group::Param => params.push((b.name.clone(), t)),
                Group::AdamM => m.push((b.name.clone(), t)),
                Group::AdamV => v.push((b.name.clone(), t)),
            }
            expected = end;
        }
        if expected != data.len() {
            return Err(corrupt("trailing bytes after the last blob"));
        }
        let optim = match header.optim_step {
            None if m.is_empty() && v.is_empty() => None,
            Some(step) => {
                let aligned = |xs: &[(String, Tensor<f32>)]| {
                    xs.len() == params.len()
                        && xs
                            .iter()
                            .zip(&params)
                            .all(|((a, ta), (b, tb))| a == b && ta.shape() == tb.shape())
                };
                if !aligned(&m) || !aligned(&v) {
                    return Err(Error::Checkpoint("optimizer moments do not mirror the parameters".into()));
                }
                Some(OptimState {
                    m: m.into_iter().map(|(_, t)| t).collect(),
                    v: v.into_iter().map(|(_, t)| t).collect(),
                    step,
                })
            }
            None => return Err(Error::Checkpoint("moment blobs without an optimizer step".into())),
        };
        Ok(Self {
            model: header.model,
            rmt: header.rmt,
            mode: header.mode,
            curriculum: header.curriculum,
            tokenizer: header.tokenizer,
            params,
            optim,
            rng: header.rng,
            progress: header.progress,
        })
    }

    /// Writes through a temporary file so a crash never leaves a partial
    /// checkpoint under `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    ckpt.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}
