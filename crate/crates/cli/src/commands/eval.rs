//! `eval`: score a checkpoint on one split at one noise level.

use demosynth_core::dataset::load_dataset;
use demosynth_core::eval::{report_from_details, AliasRuleSet};
use demosynth_core::model::load_params;
use demosynth_core::vislang::{NoiseSpec, VisVocab};

use crate::config::load_config;
use crate::{CliError, EvalArgs};

use super::{
    check_epsilon, check_pairing, decode_mode, eval_details, manifest_hash, split_entries,
    write_json_atomic, ReportEnvelope,
};

pub fn run(a: EvalArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref())?;
    let noise = NoiseSpec {
        epsilon: a.noise.unwrap_or(cfg.noise.epsilon),
        action_epsilon: a.action_noise.unwrap_or(cfg.noise.action_epsilon),
        seed: a.seed.unwrap_or(cfg.noise.seed),
    };
    check_epsilon("--noise", noise.epsilon)?;
    check_epsilon("--action-noise", noise.action_epsilon)?;
    let mode = decode_mode(a.beam)?;
    if a.jobs == 0 {
        return Err(CliError::Usage("--jobs must be ≥ 1".into()));
    }

    let (model_cfg, params, meta) = load_params(&a.ckpt)?;
    let ds = load_dataset(&a.data)?;
    let data_hash = manifest_hash(&a.data)?;
    check_pairing(&meta, &data_hash, a.allow_mismatch)?;
    let (entries, split_name) = split_entries(&ds, a.split);
    let vis = VisVocab::new(ds.manifest.dsl.q, ds.manifest.dsl.m);
    let rules = AliasRuleSet::default();

    let details = eval_details(
        &params,
        &model_cfg,
        entries,
        &vis,
        &ds.manifest.dsl,
        &rules,
        &noise,
        mode,
        a.jobs,
    )?;
    let report = report_from_details(&details, &noise);

    println!(
        "{split_name} split, {} entries, ε={} (action ε={}), noise seed {}",
        report.n, report.epsilon, report.action_epsilon, report.noise_seed
    );
    println!(
        "acc_exact {:.4} ({}/{})   acc_alias {:.4} ({}/{})",
        report.acc_exact, report.exact_count, report.n, report.acc_alias, report.alias_count, report.n
    );
    println!(
        "{} predictions failed to parse, {} truth closures overflowed",
        report.parse_failure_count, report.closure_overflow_count
    );

    if let Some(path) = &a.report {
        let envelope = ReportEnvelope {
            tool_version: env!("CARGO_PKG_VERSION"),
            ckpt: a.ckpt.display().to_string(),
            ckpt_step: meta.step,
            dataset_manifest_hash: data_hash,
            split: split_name,
            beam: a.beam,
            report,
        };
        write_json_atomic(path, &envelope)?;
        println!("report written to {}", path.display());
    }
    Ok(())
}
