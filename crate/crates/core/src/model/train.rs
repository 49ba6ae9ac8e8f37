//! Deterministic training loop: epoch-shuffled batching, optional
//! perception-noise augmentation, AdamW with warmup/inverse-sqrt schedule,
//! periodic validation, and best-checkpoint tracking.
//!
//! Every random choice is keyed on (config seed, absolute step) or (config
//! seed, epoch), never on wall time or iteration history, so a run resumed
//! from a checkpoint replays bit-identically to an uninterrupted one.

use super::net::{grad as net_grad, loss_from_logits, forward, Batch, TokenStats};
use super::optim::{adamw_step, clip_grad_norm, scheduled_lr, OptimConfig};
use super::{init_params, ModelConfig, Tensors};
use crate::dataset::DatasetEntry;
use crate::rng::{mix, CounterRng};
use crate::vislang::{assemble, inject_noise, NoiseSpec, VisVocab, VIS_PAD};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Total optimizer steps for the run. Resuming continues toward the
    /// same total, so `steps` is absolute, not incremental.
    pub steps: u64,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup: usize,
    pub grad_clip: f64,
    pub optim: OptimConfig,
    pub eval_interval: u64,
    /// Perception-noise ε applied to training demos, redrawn per visit.
    pub train_noise: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 3000,
            batch_size: 16,
            peak_lr: 1e-3,
            warmup: 200,
            grad_clip: 1.0,
            optim: OptimConfig::default(),
            eval_interval: 100,
            train_noise: 0.1,
            seed: 0,
        }
    }
}

/// Complete optimizer-visible state; checkpointable and sufficient for
/// bit-identical resumption.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model_cfg: ModelConfig,
    pub params: Tensors<f32>,
    pub m: Tensors<f32>,
    pub v: Tensors<f32>,
    /// Completed optimizer steps.
    pub step: u64,
    pub epoch: u64,
    pub cursor: usize,
    pub best_val_loss: f64,
    pub best_step: u64,
    pub best_params: Option<Tensors<f32>>,
    pub init_seed: u64,
}

impl TrainState {
    pub fn new(model_cfg: ModelConfig, seed: u64) -> TrainState {
        let params = init_params::<f32>(&model_cfg, seed);
        let m = params.zeros_like();
        let v = params.zeros_like();
        TrainState {
            model_cfg,
            params,
            m,
            v,
            step: 0,
            epoch: 0,
            cursor: 0,
            best_val_loss: f64::INFINITY,
            best_step: 0,
            best_params: None,
            init_seed: seed,
        }
    }

    /// Parameters to evaluate with: the best validation snapshot if one was
    /// taken, otherwise the current parameters.
    pub fn eval_params(&self) -> &Tensors<f32> {
        self.best_params.as_ref().unwrap_or(&self.params)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    pub lr: f64,
    pub grad_norm: f64,
    pub train_loss: f64,
    pub train_token_acc: f64,
    pub val_loss: Option<f64>,
    pub val_token_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub metrics: Vec<MetricRecord>,
    pub final_step: u64,
    pub best_step: u64,
    pub best_val_loss: Option<f64>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at step {step}: loss is not finite; parameters restored to step {restored}")]
    Divergence { step: u64, restored: u64 },
    #[error("invalid training setup: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
}

/// Assemble a teacher-forced batch from dataset entries. `noise_for_slot`
/// returns the perception-noise spec for a batch slot, or None for clean
/// demos. Rows are right-padded to the batch maximum.
pub(crate) fn entry_batch(
    entries: &[&DatasetEntry],
    vis: &VisVocab,
    max_tgt_len: usize,
    noise_for_slot: impl Fn(usize) -> Option<NoiseSpec>,
) -> Result<Batch, TrainError> {
    assert!(!entries.is_empty());
    let mut srcs: Vec<Vec<u32>> = Vec::with_capacity(entries.len());
    for (slot, e) in entries.iter().enumerate() {
        let demos = e.demonstrations()?;
        let demos = match noise_for_slot(slot) {
            Some(spec) => inject_noise(&demos, &spec, vis.m),
            None => demos,
        };
        srcs.push(assemble(&demos, vis).tokens);
    }
    let ls = srcs.iter().map(Vec::len).max().unwrap();
    let lt = entries
        .iter()
        .map(|e| e.program_tokens.len() - 1)
        .max()
        .unwrap();
    if lt > max_tgt_len {
        return Err(TrainError::Config(format!(
            "program of {} tokens exceeds max_tgt_len {}",
            lt + 1,
            max_tgt_len
        )));
    }
    let b = entries.len();
    let mut src = Array2::from_elem((b, ls), VIS_PAD);
    let mut src_mask = Array2::from_elem((b, ls), false);
    let mut tgt_in = Array2::zeros((b, lt));
    let mut tgt_out = Array2::zeros((b, lt));
    for (bi, (e, s)) in entries.iter().zip(&srcs).enumerate() {
        for (j, &t) in s.iter().enumerate() {
            src[[bi, j]] = t;
            src_mask[[bi, j]] = true;
        }
        let toks = &e.program_tokens;
        for j in 0..toks.len() - 1 {
            tgt_in[[bi, j]] = toks[j];
            tgt_out[[bi, j]] = toks[j + 1];
        }
    }
    Ok(Batch { src, src_mask, tgt_in, tgt_out })
}

/// Teacher-forced loss and token accuracy over a whole entry slice
/// (eval mode: no dropout, no noise).
pub fn eval_loss(
    params: &Tensors<f32>,
    cfg: &ModelConfig,
    entries: &[DatasetEntry],
    vis: &VisVocab,
    batch_size: usize,
) -> Result<(f64, TokenStats), TrainError> {
    assert!(!entries.is_empty() && batch_size > 0);
    let mut weighted = 0.0f64;
    let mut agg = TokenStats::default();
    for chunk in entries.chunks(batch_size) {
        let refs: Vec<&DatasetEntry> = chunk.iter().collect();
        let batch = entry_batch(&refs, vis, cfg.max_tgt_len, |_| None)?;
        let (logits, _) = forward::<f32>(params, cfg, &batch, None);
        let (l, stats, _) = loss_from_logits(&logits, &batch.tgt_out);
        weighted += l * stats.n_tokens as f64;
        agg.n_tokens += stats.n_tokens;
        agg.n_correct += stats.n_correct;
    }
    Ok((weighted / agg.n_tokens.max(1) as f64, agg))
}

fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<u32> {
    let mut order: Vec<u32> = (0..n as u32).collect();
    let mut rng = CounterRng::new(mix(&[seed, 0xe70c, epoch]));
    rng.shuffle(&mut order);
    order
}

/// Run (or resume) training until `tc.steps` total steps have completed.
/// Metrics are recorded at every `eval_interval` boundary and at the final
/// step; `on_metric` fires as each record is produced.
pub fn train(
    state: &mut TrainState,
    tc: &TrainConfig,
    train_set: &[DatasetEntry],
    val_set: &[DatasetEntry],
    vis: &VisVocab,
    mut on_metric: impl FnMut(&MetricRecord),
) -> Result<TrainReport, TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::Config("empty training set".into()));
    }
    if tc.batch_size == 0 || tc.eval_interval == 0 {
        return Err(TrainError::Config(
            "batch_size and eval_interval must be positive".into(),
        ));
    }
    state
        .model_cfg
        .validate()
        .map_err(TrainError::Config)?;
    let b = tc.batch_size.min(train_set.len());
    let n = train_set.len();
    let mut order = epoch_order(n, tc.seed, state.epoch);
    let mut metrics = Vec::new();

    while state.step < tc.steps {
        if state.cursor + b > n {
            state.epoch += 1;
            state.cursor = 0;
            order = epoch_order(n, tc.seed, state.epoch);
        }
        let step = state.step; // 0-based index of the step being taken
        let selected: Vec<&DatasetEntry> = order[state.cursor..state.cursor + b]
            .iter()
            .map(|&i| &train_set[i as usize])
            .collect();
        state.cursor += b;

        let batch = entry_batch(&selected, vis, state.model_cfg.max_tgt_len, |slot| {
            (tc.train_noise > 0.0).then(|| NoiseSpec {
                epsilon: tc.train_noise,
                seed: mix(&[tc.seed, 0x7e41, step, slot as u64]),
                action_epsilon: 0.0,
            })
        })?;
        let mut drop_rng = CounterRng::new(mix(&[tc.seed, 0xd20b, step]));
        let (loss, stats, mut grads) =
            net_grad::<f32>(&state.params, &state.model_cfg, &batch, Some(&mut drop_rng));
        if !loss.is_finite() {
            let restored = match &state.best_params {
                Some(bp) => {
                    state.params = bp.clone();
                    state.best_step
                }
                None => {
                    state.params = init_params(&state.model_cfg, state.init_seed);
                    0
                }
            };
            return Err(TrainError::Divergence { step, restored });
        }
        let grad_norm = clip_grad_norm(&mut grads, tc.grad_clip);
        let t = step + 1;
        let lr = scheduled_lr(tc.peak_lr, tc.warmup, t);
        adamw_step(&mut state.params, &grads, &mut state.m, &mut state.v, t, lr, &tc.optim);
        state.step = t;

        if t % tc.eval_interval == 0 || t == tc.steps {
            let (val_loss, val_token_acc) = if val_set.is_empty() {
                (None, None)
            } else {
                let (vl, vs) = eval_loss(&state.params, &state.model_cfg, val_set, vis, b)?;
                (Some(vl), Some(vs.accuracy()))
            };
            if let Some(vl) = val_loss {
                if vl < state.best_val_loss {
                    state.best_val_loss = vl;
                    state.best_step = t;
                    state.best_params = Some(state.params.clone());
                }
            }
            let rec = MetricRecord {
                step: t,
                lr,
                grad_norm,
                train_loss: loss,
                train_token_acc: stats.accuracy(),
                val_loss,
                val_token_acc,
            };
            on_metric(&rec);
            metrics.push(rec);
        }
    }
    Ok(TrainReport {
        metrics,
        final_step: state.step,
        best_step: state.best_step,
        best_val_loss: (state.best_val_loss.is_finite()).then_some(state.best_val_loss),
    })
}
