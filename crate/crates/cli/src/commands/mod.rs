//! Subcommand implementations and the helpers they share.

pub mod ablate;
pub mod alias_check;
pub mod eval;
pub mod gen;
pub mod run_program;
pub mod train;
pub mod version;
pub mod vocab;

use demosynth_core::dataset::{atomic_write, Dataset, DatasetEntry};
use demosynth_core::dsl::DslConfig;
use demosynth_core::eval::{check_eval_setup, evaluate_entry, AliasRuleSet, ScoreDetail};
use demosynth_core::model::{CkptMeta, DecodeMode, ModelConfig, Tensors};
use demosynth_core::vislang::{NoiseSpec, VisVocab};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::{CliError, Split};

/// SHA-256 hex of the dataset's manifest file; the pairing key embedded in
/// checkpoints.
pub fn manifest_hash(data_dir: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(data_dir.join("manifest.json"))
        .map_err(|e| CliError::Data(format!("{}: {e}", data_dir.join("manifest.json").display())))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Refuse checkpoint/dataset pairs whose manifests disagree, unless
/// overridden.
pub fn check_pairing(meta: &CkptMeta, data_hash: &str, allow_mismatch: bool) -> Result<(), CliError> {
    match &meta.dataset_manifest_hash {
        Some(h) if h == data_hash => Ok(()),
        Some(h) => {
            if allow_mismatch {
                eprintln!(
                    "warning: checkpoint was trained on manifest {h}, evaluating against {data_hash}"
                );
                Ok(())
            } else {
                Err(CliError::Data(format!(
                    "checkpoint was trained on a different dataset (manifest {h} != {data_hash}); \
                     pass --allow-mismatch to override"
                )))
            }
        }
        None => Ok(()),
    }
}

pub fn split_entries<'d>(ds: &'d Dataset, split: Split) -> (&'d [DatasetEntry], &'static str) {
    match split {
        Split::Test => (&ds.test, "test"),
        Split::Train => (&ds.train, "train"),
    }
}

pub fn decode_mode(beam: usize) -> Result<DecodeMode, CliError> {
    match beam {
        0 => Err(CliError::Usage("--beam must be ≥ 1".into())),
        1 => Ok(DecodeMode::Greedy),
        w => Ok(DecodeMode::Beam(w)),
    }
}

pub fn check_epsilon(name: &str, eps: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&eps) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{name} must be in [0, 1], got {eps}")))
    }
}

/// Per-entry scoring fanned out over at most `jobs` workers. Entry noise is
/// keyed by the entry's split position, so the result is identical for
/// every worker count.
#[allow(clippy::too_many_arguments)]
pub fn eval_details(
    params: &Tensors<f32>,
    model_cfg: &ModelConfig,
    entries: &[DatasetEntry],
    vis: &VisVocab,
    dsl: &DslConfig,
    rules: &AliasRuleSet,
    noise: &NoiseSpec,
    mode: DecodeMode,
    jobs: usize,
) -> Result<Vec<ScoreDetail>, CliError> {
    check_eval_setup(model_cfg, entries, vis, dsl)?;
    let jobs = jobs.clamp(1, entries.len());
    if jobs == 1 {
        return entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                evaluate_entry(params, model_cfg, e, i, vis, dsl, rules, noise, mode)
                    .map_err(CliError::from)
            })
            .collect();
    }
    let chunk = entries.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (w, piece) in entries.chunks(chunk).enumerate() {
            let base = w * chunk;
            handles.push(scope.spawn(move || {
                piece
                    .iter()
                    .enumerate()
                    .map(|(j, e)| {
                        evaluate_entry(params, model_cfg, e, base + j, vis, dsl, rules, noise, mode)
                    })
                    .collect::<Result<Vec<_>, _>>()
            }));
        }
        let mut all = Vec::with_capacity(entries.len());
        for h in handles {
            all.extend(h.join().expect("evaluation worker panicked")?);
        }
        Ok(all)
    })
}

/// Provenance wrapper for report files (schema in docs/report.md).
#[derive(Serialize)]
pub struct ReportEnvelope<T: Serialize> {
    pub tool_version: &'static str,
    pub ckpt: String,
    pub ckpt_step: u64,
    pub dataset_manifest_hash: String,
    pub split: &'static str,
    pub beam: usize,
    pub report: T,
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
    bytes.push(b'\n');
    atomic_write(path, &bytes)?;
    Ok(())
}
