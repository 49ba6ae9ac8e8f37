//! `train`: fit the synthesizer on a dataset, streaming metric records to
//! stdout and `metrics.jsonl`, and write params + resumable checkpoints.

use std::io::Write;

use demosynth_core::dataset::{atomic_write, load_dataset, DatasetManifest};
use demosynth_core::model::{
    load_train_state, save_params, save_train_state, train, CkptMeta, ModelConfig, TrainError,
    TrainState,
};
use demosynth_core::vislang::{l_max, VisVocab};

use crate::config::{load_config, ExperimentConfig};
use crate::lock::DirLock;
use crate::{CliError, TrainArgs};

use super::{check_pairing, manifest_hash};

/// Architecture for a given dataset: shape from the config, vocabularies
/// and windows from the manifest (the manifest is authoritative — it
/// describes the data actually on disk).
fn model_config_for(cfg: &ExperimentConfig, m: &DatasetManifest) -> Result<ModelConfig, CliError> {
    let mc = ModelConfig {
        src_vocab: m.vis_vocab_size,
        tgt_vocab: m.program_vocab_size,
        d_model: cfg.model.d_model,
        n_heads: cfg.model.n_heads,
        n_enc_blocks: cfg.model.n_enc_blocks,
        n_dec_blocks: cfg.model.n_dec_blocks,
        d_ff: cfg.model.d_ff,
        dropout: cfg.model.dropout,
        max_src_len: l_max(m.k, m.exec.t_max),
        max_tgt_len: cfg.gen.max_program_tokens,
    };
    if m.max_program_tokens > mc.max_tgt_len {
        return Err(CliError::Usage(format!(
            "dataset holds programs up to {} tokens but max_program_tokens is {}",
            m.max_program_tokens, mc.max_tgt_len
        )));
    }
    mc.validate().map_err(CliError::Usage)?;
    Ok(mc)
}

pub fn run(a: TrainArgs) -> Result<(), CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(v) = a.steps {
        cfg.train.steps = v;
    }
    if let Some(v) = a.batch {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.train.peak_lr = v;
    }
    if let Some(v) = a.warmup {
        cfg.train.warmup = v;
    }
    if let Some(v) = a.train_noise {
        cfg.train.train_noise = v;
    }
    if let Some(v) = a.seed {
        cfg.train.seed = v;
    }
    cfg.validate()?;

    let ds = load_dataset(&a.data)?;
    let data_hash = manifest_hash(&a.data)?;
    let model_cfg = model_config_for(&cfg, &ds.manifest)?;

    let _lock = DirLock::acquire(&a.out)?;
    let mut state = match &a.resume {
        Some(path) => {
            let (state, meta) = load_train_state(path)?;
            check_pairing(&meta, &data_hash, a.allow_mismatch)?;
            if state.model_cfg != model_cfg {
                return Err(CliError::Data(format!(
                    "resume checkpoint architecture {:?} disagrees with the resolved config",
                    state.model_cfg
                )));
            }
            println!(
                "resuming from {} at step {} toward step {}",
                path.display(),
                state.step,
                cfg.train.steps
            );
            state
        }
        None => TrainState::new(model_cfg.clone(), cfg.train.seed),
    };

    // Validation is a deterministic tail carve of the training split; the
    // test split never influences training.
    let n = ds.train.len();
    let n_val = if n < 2 { 0 } else { (n / 20).clamp(1, n - 1) };
    let (train_set, val_set) = ds.train.split_at(n - n_val);
    let val_set = if val_set.is_empty() { train_set } else { val_set };
    let vis = VisVocab::new(ds.manifest.dsl.q, ds.manifest.dsl.m);

    let resolved = toml::to_string_pretty(&cfg).expect("config serializes");
    atomic_write(&a.out.join("config.resolved.toml"), resolved.as_bytes())?;
    let metrics_path = a.out.join("metrics.jsonl");
    let mut log = std::io::BufWriter::new(
        std::fs::OpenOptions::new()
            .create(true)
            .append(a.resume.is_some())
            .truncate(a.resume.is_none())
            .write(true)
            .open(&metrics_path)
            .map_err(|e| CliError::Data(format!("{}: {e}", metrics_path.display())))?,
    );

    let outcome = train(&mut state, &cfg.train, train_set, val_set, &vis, |rec| {
        let line = serde_json::to_string(rec).expect("metric serializes");
        println!("{line}");
        let _ = writeln!(log, "{line}");
        let _ = log.flush();
    });
    let report = match outcome {
        Ok(r) => r,
        Err(TrainError::Divergence { step, restored }) => {
            // The state was rolled back; keep it on disk for post-mortems,
            // but fail the run.
            save_train_state(&a.out.join("train_state.ckpt"), &state, Some(data_hash))?;
            return Err(CliError::Data(format!(
                "loss diverged at step {step} (parameters rolled back to {restored}); \
                 partial state saved to {}",
                a.out.join("train_state.ckpt").display()
            )));
        }
        Err(e) => return Err(e.into()),
    };

    save_train_state(&a.out.join("train_state.ckpt"), &state, Some(data_hash.clone()))?;
    let meta = CkptMeta {
        step: if state.best_params.is_some() { state.best_step } else { state.step },
        init_seed: state.init_seed,
        dataset_manifest_hash: Some(data_hash),
    };
    save_params(&a.out.join("model.ckpt"), &model_cfg, state.eval_params(), &meta)?;

    println!(
        "trained to step {} ({} parameters); best val loss {} at step {}",
        report.final_step,
        state.params.n_params(),
        report
            .best_val_loss
            .map(|l| format!("{l:.4}"))
            .unwrap_or_else(|| "n/a".into()),
        report.best_step
    );
    println!(
        "wrote {} and {}",
        a.out.join("model.ckpt").display(),
        a.out.join("train_state.ckpt").display()
    );
    Ok(())
}
