//! Experiment configuration: one TOML tree covering generation, model
//! shape, training, and noise defaults.
//!
//! Resolution order (later wins): built-in defaults → `DEMOSYNTH_SEED` →
//! config file → CLI flags. The file may be partial; unknown keys are
//! rejected. Vocabulary sizes and window lengths are never stated in the
//! file — they derive from the generation section, so they cannot drift.

use demosynth_core::dataset::GenConfig;
use demosynth_core::dsl::ProgramVocab;
use demosynth_core::model::{ModelConfig, TrainConfig};
use demosynth_core::vislang::{l_max, NoiseSpec, VisVocab};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::CliError;

/// Width/depth of the transformer. Everything else in [`ModelConfig`] is
/// derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_blocks: usize,
    pub n_dec_blocks: usize,
    pub d_ff: usize,
    pub dropout: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            d_model: 64,
            n_heads: 4,
            n_enc_blocks: 2,
            n_dec_blocks: 2,
            d_ff: 256,
            dropout: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub gen: GenConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub noise: NoiseSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            gen: GenConfig::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            noise: NoiseSpec::clean(0),
        }
    }
}

impl ExperimentConfig {
    /// The full architecture implied by this experiment: vocabularies from
    /// the world/DSL dimensions, encoder window from k and t_max, decoder
    /// window from the program-length cap.
    pub fn model_config(&self) -> ModelConfig {
        let vis = VisVocab::new(self.gen.world.q, self.gen.world.m);
        let vocab = ProgramVocab::new(&self.gen.dsl);
        ModelConfig {
            src_vocab: vis.vocab_size(),
            tgt_vocab: vocab.size(),
            d_model: self.model.d_model,
            n_heads: self.model.n_heads,
            n_enc_blocks: self.model.n_enc_blocks,
            n_dec_blocks: self.model.n_dec_blocks,
            d_ff: self.model.d_ff,
            dropout: self.model.dropout,
            max_src_len: l_max(self.gen.k, self.gen.exec.t_max),
            max_tgt_len: self.gen.max_program_tokens,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.gen
            .validate()
            .map_err(|e| CliError::Usage(format!("config [gen]: {e}")))?;
        self.model_config()
            .validate()
            .map_err(|e| CliError::Usage(format!("config [model]: {e}")))?;
        if !(0.0..=1.0).contains(&self.noise.epsilon)
            || !(0.0..=1.0).contains(&self.noise.action_epsilon)
        {
            return Err(CliError::Usage("config [noise]: ε must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Recursive table merge; scalar/array overlay values replace base values.
fn merge(base: toml::Value, overlay: toml::Value) -> toml::Value {
    match (base, overlay) {
        (toml::Value::Table(mut b), toml::Value::Table(o)) => {
            for (k, v) in o {
                let merged = match b.remove(&k) {
                    Some(bv) => merge(bv, v),
                    None => v,
                };
                b.insert(k, merged);
            }
            toml::Value::Table(b)
        }
        (_, o) => o,
    }
}

/// Load the experiment config: defaults, then `DEMOSYNTH_SEED` (sets every
/// section's seed), then the file if given. CLI flags are applied by each
/// subcommand afterwards.
pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    let mut base = ExperimentConfig::default();
    if let Ok(s) = std::env::var("DEMOSYNTH_SEED") {
        let seed: u64 = s
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("DEMOSYNTH_SEED is not a u64: {s:?}")))?;
        base.gen.seed = seed;
        base.train.seed = seed;
        base.noise.seed = seed;
    }
    let Some(path) = path else { return Ok(base) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    let overlay: toml::Value = toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    let base_val = toml::Value::try_from(&base).expect("defaults serialize");
    merge(base_val, overlay)
        .try_into()
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

/// SHA-256 hex of the canonical JSON form; embedded in artifacts for
/// provenance.
pub fn experiment_hash(cfg: &ExperimentConfig) -> String {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_vec(cfg).expect("config serializes");
    let mut h = Sha256::new();
    h.update(&json);
    format!("{:x}", h.finalize())
}
