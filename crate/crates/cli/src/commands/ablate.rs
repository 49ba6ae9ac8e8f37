//! `ablate`: evaluate over an ε grid × seed list, aggregate per ε.

use demosynth_core::dataset::load_dataset;
use demosynth_core::eval::{aggregate_ablation, report_from_details, AliasRuleSet};
use demosynth_core::model::load_params;
use demosynth_core::vislang::{NoiseSpec, VisVocab};

use crate::config::load_config;
use crate::{AblateArgs, CliError};

use super::{
    check_epsilon, check_pairing, decode_mode, eval_details, manifest_hash, split_entries,
    write_json_atomic, ReportEnvelope,
};

pub fn run(a: AblateArgs) -> Result<(), CliError> {
    load_config(a.config.as_deref())?; // surface config errors even though ablate only reads flags
    if a.epsilons.is_empty() || a.seeds.is_empty() {
        return Err(CliError::Usage("--epsilons and --seeds must be non-empty".into()));
    }
    for &eps in &a.epsilons {
        check_epsilon("--epsilons", eps)?;
    }
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

    let mut cells = Vec::with_capacity(a.epsilons.len());
    for &eps in &a.epsilons {
        let mut reports = Vec::with_capacity(a.seeds.len());
        for &seed in &a.seeds {
            let noise = NoiseSpec { epsilon: eps, seed, action_epsilon: 0.0 };
            let details = eval_details(
                &params, &model_cfg, entries, &vis, &ds.manifest.dsl, &rules, &noise, mode, a.jobs,
            )?;
            reports.push(report_from_details(&details, &noise));
        }
        cells.push((eps, reports));
    }
    let table = aggregate_ablation(cells);

    println!(
        "{split_name} split, {} entries, seeds {:?}, beam {}",
        entries.len(),
        a.seeds,
        a.beam
    );
    print!("{}", table.render());

    if let Some(path) = &a.report {
        let envelope = ReportEnvelope {
            tool_version: env!("CARGO_PKG_VERSION"),
            ckpt: a.ckpt.display().to_string(),
            ckpt_step: meta.step,
            dataset_manifest_hash: data_hash,
            split: split_name,
            beam: a.beam,
            report: table,
        };
        write_json_atomic(path, &envelope)?;
        println!("table written to {}", path.display());
    }
    Ok(())
}
