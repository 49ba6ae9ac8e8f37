//! The visual language: deterministic (perceptions, action) -> token
//! encoding, model-input sequence assembly, and the perception-noise
//! injector used by the ablation study.
//!
//! Wire format: pa = concat(percepts, one_hot_m(action)), ψ = Σ pa_n·2^n
//! with n little-endian from 0 (percepts are the low bits), token id = 4 + ψ.

use crate::exec::Demonstration;
use crate::rng::unit_f64;
use crate::world::PerceptVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const VIS_PAD: u32 = 0;
pub const VIS_START: u32 = 1;
pub const VIS_SEP: u32 = 2;
pub const VIS_END: u32 = 3;
/// Payload ids start here: id = PAYLOAD_OFFSET + ψ.
pub const PAYLOAD_OFFSET: u32 = 4;

/// Compatibility tag stored in dataset manifests and checkpoints; any
/// change to the bit order or special-token layout must bump it.
pub const TOKENIZER_CONVENTION: &str = "pa-little-endian/specials-4/v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VisError {
    #[error("percept vector has length {got}, expected q={q}")]
    BadPerceptLen { got: usize, q: usize },
    #[error("action index {action} out of range (m={m})")]
    BadAction { action: usize, m: usize },
    #[error("token id {id} out of range (vocab size {vocab})")]
    BadTokenId { id: u32, vocab: usize },
    #[error("token id {id} has malformed action bits (not one-hot)")]
    MalformedToken { id: u32 },
}

/// Tokenizer for fixed (q, m). The vocabulary covers the full 2^(q+m)
/// payload range even though only m·2^q values are producible; unreachable
/// ids simply receive no training signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisVocab {
    pub q: usize,
    pub m: usize,
}

impl VisVocab {
    pub fn new(q: usize, m: usize) -> VisVocab {
        assert!(q >= 1 && m >= 2, "q ≥ 1 and m ≥ 2 required");
        assert!(q + m <= 24, "vocab 2^(q+m) must stay desk-sized");
        VisVocab { q, m }
    }

    pub fn vocab_size(&self) -> usize {
        PAYLOAD_OFFSET as usize + (1usize << (self.q + self.m))
    }

    /// ψ for one (perceptions, action) pair, as a token id.
    pub fn tokenize(&self, percepts: &PerceptVector, action: usize) -> Result<u32, VisError> {
        if percepts.len() != self.q {
            return Err(VisError::BadPerceptLen {
                got: percepts.len(),
                q: self.q,
            });
        }
        if action >= self.m {
            return Err(VisError::BadAction {
                action,
                m: self.m,
            });
        }
        let mut psi: u32 = 0;
        for (n, &bit) in percepts.0.iter().enumerate() {
            if bit {
                psi |= 1 << n;
            }
        }
        psi |= 1 << (self.q + action);
        Ok(PAYLOAD_OFFSET + psi)
    }

    /// Inverse of [`tokenize`](Self::tokenize) on payload ids.
    pub fn detokenize(&self, id: u32) -> Result<(PerceptVector, usize), VisError> {
        if id < PAYLOAD_OFFSET || (id as usize) >= self.vocab_size() {
            return Err(VisError::BadTokenId {
                id,
                vocab: self.vocab_size(),
            });
        }
        let psi = id - PAYLOAD_OFFSET;
        let percepts = PerceptVector((0..self.q).map(|n| psi & (1 << n) != 0).collect());
        let action_bits = psi >> self.q;
        if action_bits == 0 || action_bits & (action_bits - 1) != 0 {
            return Err(VisError::MalformedToken { id });
        }
        Ok((percepts, action_bits.trailing_zeros() as usize))
    }
}

/// Maximum assembled length for k demos of at most t_max steps each:
/// k·t_max payloads + (k−1) separators + <start> + <end>.
pub fn l_max(k: usize, t_max: usize) -> usize {
    k * t_max + k + 1
}

/// Assembled model input: `<start> demo_1 <sep> ... <sep> demo_k <end>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisualSequence {
    pub tokens: Vec<u32>,
    /// Half-open token-index range of each demo's payload span.
    pub demo_boundaries: Vec<(usize, usize)>,
}

/// Concatenates a demo set into one visual sequence.
///
/// Panics if any demo is empty (the exec layer never stores those) or any
/// step fails to tokenize (impossible for replay-consistent sets).
pub fn assemble(demos: &[Demonstration], vocab: &VisVocab) -> VisualSequence {
    let mut tokens = vec![VIS_START];
    let mut demo_boundaries = Vec::with_capacity(demos.len());
    for (di, demo) in demos.iter().enumerate() {
        assert!(!demo.is_empty(), "demo {di} is empty");
        if di > 0 {
            tokens.push(VIS_SEP);
        }
        let start = tokens.len();
        for (p, a) in &demo.steps {
            tokens.push(vocab.tokenize(p, *a).expect("stored step must tokenize"));
        }
        demo_boundaries.push((start, tokens.len()));
    }
    tokens.push(VIS_END);
    VisualSequence {
        tokens,
        demo_boundaries,
    }
}

/// Perception-noise spec for the ablation. `action_epsilon` is an
/// exploration-only extra (defaults to 0 and stays 0 in headline runs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub epsilon: f64,
    pub seed: u64,
    #[serde(default)]
    pub action_epsilon: f64,
}

impl NoiseSpec {
    pub fn clean(seed: u64) -> NoiseSpec {
        NoiseSpec {
            epsilon: 0.0,
            seed,
            action_epsilon: 0.0,
        }
    }
}

/// Flips each perception bit independently with probability epsilon, keyed
/// by (seed, demo-index, step-index, bit-index) so the result is
/// reproducible and independent of iteration order. Actions are untouched
/// unless `action_epsilon > 0`, in which case an affected step's action is
/// redrawn uniformly from the other m−1 actions (keyed at bit indices q and
/// q+1, which percept keys never use).
///
/// Noise is a model-input corruption only: noised demos are not
/// replay-consistent and are never written back to a dataset.
pub fn inject_noise(demos: &[Demonstration], spec: &NoiseSpec, m: usize) -> Vec<Demonstration> {
    let mut out = demos.to_vec();
    for (di, demo) in out.iter_mut().enumerate() {
        for (si, (percepts, action)) in demo.steps.iter_mut().enumerate() {
            for (bi, bit) in percepts.0.iter_mut().enumerate() {
                let u = unit_f64(&[spec.seed, di as u64, si as u64, bi as u64]);
                if u < spec.epsilon {
                    *bit = !*bit;
                }
            }
            if spec.action_epsilon > 0.0 {
                let q = percepts.0.len() as u64;
                let u = unit_f64(&[spec.seed, di as u64, si as u64, q]);
                if u < spec.action_epsilon {
                    let draw = unit_f64(&[spec.seed, di as u64, si as u64, q + 1]);
                    let shift = 1 + (draw * (m as f64 - 1.0)) as usize;
                    *action = (*action + shift.min(m - 1)) % m;
                }
            }
        }
    }
    out
}
