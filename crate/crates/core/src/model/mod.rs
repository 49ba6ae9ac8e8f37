//! Encoder-decoder transformer over visual-token inputs and program-token
//! outputs, implemented directly on `ndarray` with explicit backward passes.
//!
//! Everything is generic over the scalar type `F`: production code runs in
//! `f32`, the finite-difference gradient checker instantiates the same code
//! in `f64`. Parameters live in a [`Tensors`] container keyed by stable
//! names; iteration order is the insertion order fixed by [`param_specs`],
//! which is what makes optimizer state, checkpoints, and gradient checks
//! line up without any bookkeeping at the call sites.

mod ckpt;
mod decode;
mod gradcheck;
mod layers;
mod net;
mod optim;
mod train;

pub use ckpt::{
    load_params, load_train_state, save_params, save_train_state, CheckpointError, CkptMeta,
    CKPT_VERSION,
};
pub use decode::{synthesize, DecodeMode};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::masked_softmax;
pub use net::{forward, grad, loss, loss_from_logits, Batch, TokenStats};
pub use optim::{adamw_step, clip_grad_norm, scheduled_lr, OptimConfig};
pub use train::{
    train, MetricRecord, TrainConfig, TrainError, TrainReport, TrainState,
};

#[cfg(test)]
pub(crate) use train::tests::{tiny_dataset, tiny_model};

use ndarray::{ArrayD, ArrayViewD, IxDyn};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Scalar bound for all model math. `f32` for production, `f64` for
/// gradient checking; both hit the same code paths.
pub trait Scalar: ndarray::NdFloat + std::iter::Sum<Self> {}
impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for `F::from(x).unwrap()`; conversions from literals and `f64`
/// accumulators are pervasive in the layer code.
#[inline]
pub(crate) fn sf<F: Scalar>(x: f64) -> F {
    F::from(x).expect("finite f64 converts to model scalar")
}

/// Architecture hyperparameters. Every checkpoint embeds the exact config it
/// was built with; loading verifies shape compatibility from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Visual-token vocabulary size (encoder input).
    pub src_vocab: usize,
    /// Program-token vocabulary size (decoder input/output).
    pub tgt_vocab: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_blocks: usize,
    pub n_dec_blocks: usize,
    pub d_ff: usize,
    pub dropout: f64,
    /// Maximum encoder sequence length (learned position table size).
    pub max_src_len: usize,
    /// Maximum decoder sequence length (also the synthesis length cap).
    pub max_tgt_len: usize,
}

impl ModelConfig {
    /// Desk-scale defaults; vocab sizes must still be set by the caller
    /// (they derive from the world and DSL configurations).
    pub fn desk(src_vocab: usize, tgt_vocab: usize, max_src_len: usize) -> Self {
        ModelConfig {
            src_vocab,
            tgt_vocab,
            d_model: 64,
            n_heads: 4,
            n_enc_blocks: 2,
            n_dec_blocks: 2,
            d_ff: 256,
            dropout: 0.1,
            max_src_len,
            max_tgt_len: 64,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.d_model == 0 || self.n_heads == 0 {
            return Err("d_model and n_heads must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return Err(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_enc_blocks == 0 || self.n_dec_blocks == 0 {
            return Err("need at least one encoder and one decoder block".into());
        }
        if self.src_vocab < 4 || self.tgt_vocab < 4 {
            return Err("vocabularies must include the special tokens".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("dropout {} outside [0,1)", self.dropout));
        }
        if self.max_src_len == 0 || self.max_tgt_len == 0 {
            return Err("sequence length caps must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Ordered map from parameter name to dense array. Insertion order is part
/// of the contract: checkpoints serialize arrays in this order and the
/// optimizer walks parameters and gradients zipped by it.
#[derive(Debug, Clone)]
pub struct Tensors<F> {
    entries: Vec<(String, ArrayD<F>)>,
    index: HashMap<String, usize>,
}

impl<F: Scalar> Tensors<F> {
    pub fn new() -> Self {
        Tensors { entries: Vec::new(), index: HashMap::new() }
    }

    pub fn insert(&mut self, name: &str, arr: ArrayD<F>) {
        assert!(
            !self.index.contains_key(name),
            "duplicate tensor name {name:?}"
        );
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push((name.to_string(), arr));
    }

    pub fn get(&self, name: &str) -> ArrayViewD<'_, F> {
        let i = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("missing tensor {name:?}"));
        self.entries[i].1.view()
    }

    /// View a tensor as 2-D; panics if the stored rank differs.
    pub fn get2(&self, name: &str) -> ndarray::ArrayView2<'_, F> {
        self.get(name)
            .into_dimensionality()
            .unwrap_or_else(|_| panic!("tensor {name:?} is not 2-D"))
    }

    /// View a tensor as 1-D; panics if the stored rank differs.
    pub fn get1(&self, name: &str) -> ndarray::ArrayView1<'_, F> {
        self.get(name)
            .into_dimensionality()
            .unwrap_or_else(|_| panic!("tensor {name:?} is not 1-D"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut ArrayD<F> {
        let i = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("missing tensor {name:?}"));
        &mut self.entries[i].1
    }

    /// Accumulate `arr` into the named tensor (creating gradients is always
    /// `zeros_like` followed by `accum` calls from the backward pass).
    pub fn accum<D: ndarray::Dimension>(&mut self, name: &str, arr: ndarray::Array<F, D>) {
        let slot = self.get_mut(name);
        let dyn_arr = arr.into_dyn();
        assert_eq!(
            slot.shape(),
            dyn_arr.shape(),
            "gradient shape mismatch for {name:?}"
        );
        *slot += &dyn_arr;
    }

    pub fn zeros_like(&self) -> Tensors<F> {
        let mut out = Tensors::new();
        for (name, arr) in &self.entries {
            out.insert(name, ArrayD::zeros(arr.raw_dim()));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<F>)> {
        self.entries.iter().map(|(n, a)| (n.as_str(), a))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ArrayD<F>)> {
        self.entries.iter_mut().map(|(n, a)| (n.as_str(), a))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Total number of scalar parameters.
    pub fn n_params(&self) -> usize {
        self.entries.iter().map(|(_, a)| a.len()).sum()
    }

    /// Convert element type; used to move f32 checkpoints into the f64
    /// gradient-check instantiation and back.
    pub fn map_scalar<G: Scalar>(&self) -> Tensors<G> {
        let mut out = Tensors::new();
        for (name, arr) in &self.entries {
            out.insert(name, arr.mapv(|x| G::from(x).unwrap()));
        }
        out
    }
}

impl<F: Scalar> Default for Tensors<F> {
    fn default() -> Self {
        Self::new()
    }
}

/// The full parameter name/shape schedule for a config, in canonical order.
///
/// Naming: `enc.{i}.attn.{wq,wk,wv,wo}`, `enc.{i}.ln1.g`, `enc.{i}.ffn.w1`…;
/// decoder blocks add a cross-attention group `dec.{i}.xattn.*` with its own
/// `ln2.g`, shifting the feed-forward norm to `ln3.g`.
pub fn param_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.d_model;
    let mut specs: Vec<(String, Vec<usize>)> = vec![
        ("src_embed".into(), vec![cfg.src_vocab, d]),
        ("src_pos".into(), vec![cfg.max_src_len, d]),
        ("tgt_embed".into(), vec![cfg.tgt_vocab, d]),
        ("tgt_pos".into(), vec![cfg.max_tgt_len, d]),
    ];
    let attn = |prefix: &str, specs: &mut Vec<(String, Vec<usize>)>| {
        for w in ["wq", "wk", "wv", "wo"] {
            specs.push((format!("{prefix}.{w}"), vec![d, d]));
        }
    };
    for i in 0..cfg.n_enc_blocks {
        let p = format!("enc.{i}");
        specs.push((format!("{p}.ln1.g"), vec![d]));
        attn(&format!("{p}.attn"), &mut specs);
        specs.push((format!("{p}.ln2.g"), vec![d]));
        specs.push((format!("{p}.ffn.w1"), vec![d, cfg.d_ff]));
        specs.push((format!("{p}.ffn.w2"), vec![cfg.d_ff, d]));
    }
    specs.push(("enc.final_ln.g".into(), vec![d]));
    for i in 0..cfg.n_dec_blocks {
        let p = format!("dec.{i}");
        specs.push((format!("{p}.ln1.g"), vec![d]));
        attn(&format!("{p}.attn"), &mut specs);
        specs.push((format!("{p}.ln2.g"), vec![d]));
        attn(&format!("{p}.xattn"), &mut specs);
        specs.push((format!("{p}.ln3.g"), vec![d]));
        specs.push((format!("{p}.ffn.w1"), vec![d, cfg.d_ff]));
        specs.push((format!("{p}.ffn.w2"), vec![cfg.d_ff, d]));
    }
    specs.push(("dec.final_ln.g".into(), vec![d]));
    specs.push(("out_proj".into(), vec![d, cfg.tgt_vocab]));
    specs
}

/// Initialize parameters: N(0, 0.02²) for weights and embeddings, ones for
/// layer-norm gains. Fully determined by `seed`; each tensor draws from its
/// own counter stream, so adding blocks does not reshuffle earlier tensors.
pub fn init_params<F: Scalar>(cfg: &ModelConfig, seed: u64) -> Tensors<F> {
    let mut params = Tensors::new();
    for (tensor_idx, (name, shape)) in param_specs(cfg).into_iter().enumerate() {
        let arr = if name.ends_with(".g") {
            ArrayD::ones(IxDyn(&shape))
        } else {
            let mut rng = crate::rng::CounterRng::new(crate::rng::mix(&[
                seed,
                0x1417, // domain tag: parameter init
                tensor_idx as u64,
            ]));
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            while data.len() < n {
                let (a, b) = gaussian_pair(&mut rng);
                data.push(sf::<F>(0.02 * a));
                if data.len() < n {
                    data.push(sf::<F>(0.02 * b));
                }
            }
            ArrayD::from_shape_vec(IxDyn(&shape), data).expect("shape matches length")
        };
        params.insert(&name, arr);
    }
    params
}

/// One Box-Muller draw: two independent standard normals.
fn gaussian_pair(rng: &mut crate::rng::CounterRng) -> (f64, f64) {
    // u1 in (0,1]: shift so ln(u1) is finite.
    let u1 = 1.0 - rng.next_f64();
    let u2 = rng.next_f64();
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Hex SHA-256 of a value's canonical JSON; ties checkpoints and reports to
/// the exact configuration that produced them.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_vec(value).expect("config serializes");
    let mut h = Sha256::new();
    h.update(&json);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            src_vocab: 12,
            tgt_vocab: 9,
            d_model: 8,
            n_heads: 2,
            n_enc_blocks: 1,
            n_dec_blocks: 1,
            d_ff: 16,
            dropout: 0.0,
            max_src_len: 6,
            max_tgt_len: 5,
        }
    }

    #[test]
    fn param_specs_order_and_shapes() {
        let cfg = tiny();
        let specs = param_specs(&cfg);
        // First four tensors are the embedding tables, in fixed order.
        assert_eq!(specs[0], ("src_embed".to_string(), vec![12, 8]));
        assert_eq!(specs[1], ("src_pos".to_string(), vec![6, 8]));
        assert_eq!(specs[2], ("tgt_embed".to_string(), vec![9, 8]));
        assert_eq!(specs[3], ("tgt_pos".to_string(), vec![5, 8]));
        assert_eq!(specs.last().unwrap(), &("out_proj".to_string(), vec![8, 9]));
        // Encoder block: ln1, 4 attn mats, ln2, 2 ffn mats = 8 tensors.
        // Decoder block: ln1, 4 attn, ln2, 4 xattn, ln3, 2 ffn = 13 tensors.
        assert_eq!(specs.len(), 4 + 8 + 1 + 13 + 1 + 1);
    }

    #[test]
    fn init_is_deterministic_and_scaled() {
        let cfg = tiny();
        let a: Tensors<f32> = init_params(&cfg, 7);
        let b: Tensors<f32> = init_params(&cfg, 7);
        for ((na, ta), (nb, tb)) in a.iter().zip(b.iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta, tb, "tensor {na} differs between identical seeds");
        }
        let c: Tensors<f32> = init_params(&cfg, 8);
        let wq_a = a.get("enc.0.attn.wq");
        let wq_c = c.get("enc.0.attn.wq");
        assert_ne!(wq_a, wq_c, "different seeds must give different weights");
        // Gains are exactly one; weights have std near 0.02.
        assert!(a.get("enc.0.ln1.g").iter().all(|&g| g == 1.0));
        let emb = a.get("src_embed");
        let mean: f32 = emb.iter().copied().sum::<f32>() / emb.len() as f32;
        let var: f32 =
            emb.iter().map(|&x| (x - mean) * (x - mean)).sum::<f32>() / emb.len() as f32;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var.sqrt() - 0.02).abs() < 0.008, "std {}", var.sqrt());
    }

    #[test]
    fn tensors_roundtrip_and_accum() {
        let mut t: Tensors<f64> = Tensors::new();
        t.insert("a", ArrayD::zeros(IxDyn(&[2, 3])));
        t.insert("b", ArrayD::ones(IxDyn(&[4])));
        assert_eq!(t.n_params(), 10);
        t.accum("a", ndarray::Array2::<f64>::ones((2, 3)));
        t.accum("a", ndarray::Array2::<f64>::ones((2, 3)));
        assert_eq!(t.get("a")[[1, 2]], 2.0);
        let z = t.zeros_like();
        assert_eq!(z.names().collect::<Vec<_>>(), vec!["a", "b"]);
        assert!(z.get("b").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn config_validation_catches_bad_heads() {
        let mut cfg = tiny();
        cfg.n_heads = 3;
        assert!(cfg.validate().is_err());
        assert!(tiny().validate().is_ok());
    }

    #[test]
    fn gaussian_pair_moments() {
        let mut rng = crate::rng::CounterRng::new(99);
        let mut sum = 0.0;
        let mut sq = 0.0;
        let n = 20_000;
        for _ in 0..n / 2 {
            let (a, b) = gaussian_pair(&mut rng);
            sum += a + b;
            sq += a * a + b * b;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
