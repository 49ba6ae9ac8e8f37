//! Checkpoint serialization.
//!
//! Layout: 8-byte magic `DSYNCKPT`, u32 LE format version, u32 LE header
//! length, a JSON header (config, array schedule, counters), then every
//! array as raw little-endian f32 in header order. Two kinds share the
//! container: `params` (inference artifact) and `train` (full optimizer
//! state: parameters, Adam moments, optional best-validation snapshot).
//! Loading re-derives the expected array schedule from the embedded config
//! and refuses anything that does not match exactly.

use super::train::TrainState;
use super::{config_hash, param_specs, ModelConfig, Tensors};
use crate::vislang::TOKENIZER_CONVENTION;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const CKPT_MAGIC: &[u8; 8] = b"DSYNCKPT";
pub const CKPT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint: {0}")]
    Format(String),
    #[error("checkpoint format version {found} unsupported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint does not match model: {0}")]
    Mismatch(String),
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
}

/// Provenance carried by every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkptMeta {
    pub step: u64,
    pub init_seed: u64,
    /// SHA-256 of the manifest of the dataset this model was trained on;
    /// evaluation refuses a different dataset unless overridden.
    pub dataset_manifest_hash: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ArraySpec {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String, // "params" | "train"
    config: ModelConfig,
    config_hash: String,
    tokenizer_convention: String,
    arrays: Vec<ArraySpec>,
    step: u64,
    init_seed: u64,
    dataset_manifest_hash: Option<String>,
    #[serde(default)]
    epoch: u64,
    #[serde(default)]
    cursor: u64,
    #[serde(default)]
    best_val_loss: Option<f64>,
    #[serde(default)]
    best_step: u64,
    #[serde(default)]
    has_moments: bool,
    #[serde(default)]
    has_best: bool,
}

fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "ckpt".into())
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Verify a tensor set matches the schedule derived from `cfg` exactly
/// (names, order, shapes).
fn check_schedule(cfg: &ModelConfig, t: &Tensors<f32>) -> Result<(), CheckpointError> {
    let specs = param_specs(cfg);
    if specs.len() != t.len() {
        return Err(CheckpointError::Mismatch(format!(
            "expected {} tensors, found {}",
            specs.len(),
            t.len()
        )));
    }
    for ((name, shape), (tn, ta)) in specs.iter().zip(t.iter()) {
        if name != tn || shape.as_slice() != ta.shape() {
            return Err(CheckpointError::Mismatch(format!(
                "tensor {tn} {:?} does not match schedule entry {name} {shape:?}",
                ta.shape()
            )));
        }
    }
    Ok(())
}

fn push_tensors(buf: &mut Vec<u8>, t: &Tensors<f32>) {
    for (_, arr) in t.iter() {
        for &x in arr.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
}

fn write_checkpoint(path: &Path, header: &Header, sections: &[&Tensors<f32>]) -> Result<(), CheckpointError> {
    let header_json = serde_json::to_vec(header)?;
    let mut buf = Vec::with_capacity(
        16 + header_json.len() + sections.iter().map(|t| 4 * t.n_params()).sum::<usize>(),
    );
    buf.extend_from_slice(CKPT_MAGIC);
    buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_json);
    for t in sections {
        push_tensors(&mut buf, t);
    }
    atomic_write(path, &buf)?;
    Ok(())
}

struct Parsed {
    header: Header,
    body: Vec<u8>,
}

fn read_checkpoint(path: &Path) -> Result<Parsed, CheckpointError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 16 || &bytes[..8] != CKPT_MAGIC {
        return Err(CheckpointError::Format(format!(
            "{} lacks the checkpoint magic",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CKPT_VERSION {
        return Err(CheckpointError::Version { found: version, expected: CKPT_VERSION });
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + hlen {
        return Err(CheckpointError::Format("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[16..16 + hlen])?;
    let body = bytes[16 + hlen..].to_vec();
    Ok(Parsed { header, body })
}

/// Read one tensor section (every array in `specs` order) from `body`
/// starting at `*off`.
fn take_tensors(
    specs: &[ArraySpec],
    body: &[u8],
    off: &mut usize,
) -> Result<Tensors<f32>, CheckpointError> {
    let mut out = Tensors::new();
    for spec in specs {
        let n: usize = spec.shape.iter().product();
        let need = 4 * n;
        if *off + need > body.len() {
            return Err(CheckpointError::Format(format!(
                "truncated data for tensor {}",
                spec.name
            )));
        }
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let s = *off + 4 * i;
            data.push(f32::from_le_bytes(body[s..s + 4].try_into().unwrap()));
        }
        *off += need;
        out.insert(
            &spec.name,
            ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&spec.shape), data)
                .expect("shape matches length"),
        );
    }
    Ok(out)
}

fn header_schedule(cfg: &ModelConfig, header: &Header) -> Result<(), CheckpointError> {
    let specs = param_specs(cfg);
    if specs.len() != header.arrays.len()
        || specs
            .iter()
            .zip(header.arrays.iter())
            .any(|((n, s), a)| *n != a.name || *s != a.shape)
    {
        return Err(CheckpointError::Mismatch(
            "array schedule does not match the embedded config".into(),
        ));
    }
    Ok(())
}

fn specs_of(cfg: &ModelConfig) -> Vec<ArraySpec> {
    param_specs(cfg)
        .into_iter()
        .map(|(name, shape)| ArraySpec { name, shape })
        .collect()
}

/// Save an inference artifact: config + parameters + provenance.
pub fn save_params(
    path: &Path,
    cfg: &ModelConfig,
    params: &Tensors<f32>,
    meta: &CkptMeta,
) -> Result<(), CheckpointError> {
    check_schedule(cfg, params)?;
    let header = Header {
        kind: "params".into(),
        config: cfg.clone(),
        config_hash: config_hash(cfg),
        tokenizer_convention: TOKENIZER_CONVENTION.into(),
        arrays: specs_of(cfg),
        step: meta.step,
        init_seed: meta.init_seed,
        dataset_manifest_hash: meta.dataset_manifest_hash.clone(),
        epoch: 0,
        cursor: 0,
        best_val_loss: None,
        best_step: 0,
        has_moments: false,
        has_best: false,
    };
    write_checkpoint(path, &header, &[params])
}

/// Load parameters from either checkpoint kind. For a `train` checkpoint
/// this returns the *current* parameters; use [`load_train_state`] when the
/// best-validation snapshot matters.
pub fn load_params(path: &Path) -> Result<(ModelConfig, Tensors<f32>, CkptMeta), CheckpointError> {
    let parsed = read_checkpoint(path)?;
    header_schedule(&parsed.header.config, &parsed.header)?;
    let mut off = 0usize;
    let params = take_tensors(&parsed.header.arrays, &parsed.body, &mut off)?;
    let meta = CkptMeta {
        step: parsed.header.step,
        init_seed: parsed.header.init_seed,
        dataset_manifest_hash: parsed.header.dataset_manifest_hash.clone(),
    };
    Ok((parsed.header.config, params, meta))
}

/// Save the complete optimizer state for exact resumption.
pub fn save_train_state(
    path: &Path,
    state: &TrainState,
    dataset_manifest_hash: Option<String>,
) -> Result<(), CheckpointError> {
    check_schedule(&state.model_cfg, &state.params)?;
    let header = Header {
        kind: "train".into(),
        config: state.model_cfg.clone(),
        config_hash: config_hash(&state.model_cfg),
        tokenizer_convention: TOKENIZER_CONVENTION.into(),
        arrays: specs_of(&state.model_cfg),
        step: state.step,
        init_seed: state.init_seed,
        dataset_manifest_hash,
        epoch: state.epoch,
        cursor: state.cursor as u64,
        best_val_loss: state.best_val_loss.is_finite().then_some(state.best_val_loss),
        best_step: state.best_step,
        has_moments: true,
        has_best: state.best_params.is_some(),
    };
    let mut sections: Vec<&Tensors<f32>> = vec![&state.params, &state.m, &state.v];
    if let Some(bp) = &state.best_params {
        sections.push(bp);
    }
    write_checkpoint(path, &header, &sections)
}

/// Restore a [`TrainState`] saved by [`save_train_state`].
pub fn load_train_state(path: &Path) -> Result<(TrainState, CkptMeta), CheckpointError> {
    let parsed = read_checkpoint(path)?;
    if parsed.header.kind != "train" {
        return Err(CheckpointError::Mismatch(format!(
            "kind {:?} is not a training checkpoint",
            parsed.header.kind
        )));
    }
    if !parsed.header.has_moments {
        return Err(CheckpointError::Mismatch(
            "training checkpoint lacks optimizer moments".into(),
        ));
    }
    header_schedule(&parsed.header.config, &parsed.header)?;
    let mut off = 0usize;
    let params = take_tensors(&parsed.header.arrays, &parsed.body, &mut off)?;
    let m = take_tensors(&parsed.header.arrays, &parsed.body, &mut off)?;
    let v = take_tensors(&parsed.header.arrays, &parsed.body, &mut off)?;
    let best_params = if parsed.header.has_best {
        Some(take_tensors(&parsed.header.arrays, &parsed.body, &mut off)?)
    } else {
        None
    };
    if off != parsed.body.len() {
        return Err(CheckpointError::Format(format!(
            "{} trailing bytes after tensor data",
            parsed.body.len() - off
        )));
    }
    let meta = CkptMeta {
        step: parsed.header.step,
        init_seed: parsed.header.init_seed,
        dataset_manifest_hash: parsed.header.dataset_manifest_hash.clone(),
    };
    let state = TrainState {
        model_cfg: parsed.header.config,
        params,
        m,
        v,
        step: parsed.header.step,
        epoch: parsed.header.epoch,
        cursor: parsed.header.cursor as usize,
        best_val_loss: parsed.header.best_val_loss.unwrap_or(f64::INFINITY),
        best_step: parsed.header.best_step,
        best_params,
        init_seed: parsed.header.init_seed,
    };
    Ok((state, meta))
}
