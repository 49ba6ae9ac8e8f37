//! `gen`: sample programs, generate covering demo sets, write the dataset.

use demosynth_core::dataset::{atomic_write, build_dataset_jobs, write_dataset};

use crate::config::load_config;
use crate::lock::DirLock;
use crate::{CliError, GenArgs};

use super::manifest_hash;

pub fn run(a: GenArgs) -> Result<(), CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(n) = a.train {
        cfg.gen.n_train = n;
    }
    if let Some(n) = a.test {
        cfg.gen.n_test = n;
    }
    if let Some(k) = a.k {
        cfg.gen.k = k;
    }
    if let Some(s) = a.seed {
        cfg.gen.seed = s;
    }
    if a.jobs == 0 {
        return Err(CliError::Usage("--jobs must be ≥ 1".into()));
    }
    cfg.validate()?;

    let _lock = DirLock::acquire(&a.out)?;
    let ds = build_dataset_jobs(&cfg.gen, a.jobs)?;
    write_dataset(&ds, &a.out)?;
    let resolved = toml::to_string_pretty(&cfg).expect("config serializes");
    atomic_write(&a.out.join("config.resolved.toml"), resolved.as_bytes())?;

    let m = &ds.manifest;
    println!(
        "wrote {} train + {} test entries to {} (k={}, seed={})",
        m.n_train,
        m.n_test,
        a.out.display(),
        m.k,
        m.seed
    );
    println!(
        "sampler skipped {} duplicates, {} unsatisfiable, {} oversize; longest program {} tokens",
        m.duplicates, m.rejected, m.oversize, m.max_program_tokens
    );
    println!("manifest sha256 {}", manifest_hash(&a.out)?);
    Ok(())
}
