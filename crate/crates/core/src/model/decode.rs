//! Autoregressive decoding with a per-block key/value cache.
//!
//! The incremental path processes one target position at a time: encoder
//! memory and the cross-attention K/V projections are computed once per
//! source sequence, decoder self-attention keys/values accumulate row by
//! row. Greedy decoding breaks ties toward the lowest token id; beam search
//! scores finished hypotheses by mean token log-probability and breaks ties
//! lexicographically, so `Beam(1)` reproduces greedy exactly.

use super::layers::LN_EPS;
use super::net::encode_memory;
use super::{sf, ModelConfig, Scalar, Tensors};
use crate::dsl::{BOS_ID, EOS_ID};
use ndarray::{Array1, Array2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Beam(usize),
}

/// Per-source precomputation: cross-attention keys/values for every decoder
/// block, shared by all hypotheses.
struct CrossCtx<F> {
    k: Vec<Array2<F>>,
    v: Vec<Array2<F>>,
}

/// Per-hypothesis decoder state: self-attention K/V rows for the tokens fed
/// so far.
#[derive(Clone)]
struct DecState<F> {
    self_k: Vec<Array2<F>>,
    self_v: Vec<Array2<F>>,
}

impl<F: Scalar> DecState<F> {
    fn new(cfg: &ModelConfig) -> Self {
        let empty = || {
            (0..cfg.n_dec_blocks)
                .map(|_| Array2::zeros((0, cfg.d_model)))
                .collect()
        };
        DecState { self_k: empty(), self_v: empty() }
    }
}

fn ln_row<F: Scalar>(x: &Array1<F>, g: ndarray::ArrayView1<F>) -> Array1<F> {
    let d = x.len();
    let dn = sf::<F>(d as f64);
    let mu = x.sum() / dn;
    let mut var = F::zero();
    for &v in x.iter() {
        var = var + (v - mu) * (v - mu);
    }
    var = var / dn;
    let inv = F::one() / (var + sf::<F>(LN_EPS)).sqrt();
    let mut y = Array1::zeros(d);
    for j in 0..d {
        y[j] = g[j] * (x[j] - mu) * inv;
    }
    y
}

/// Single-query multi-head attention over cached keys/values.
fn mha_row<F: Scalar>(
    q: &Array1<F>,
    k: &Array2<F>,
    v: &Array2<F>,
    n_heads: usize,
) -> Array1<F> {
    let d = q.len();
    let lk = k.nrows();
    debug_assert!(lk > 0, "attention over empty cache");
    let dh = d / n_heads;
    let scale = sf::<F>(1.0 / (dh as f64).sqrt());
    let mut ctx = Array1::zeros(d);
    let mut scores = vec![F::zero(); lk];
    for h in 0..n_heads {
        let c0 = h * dh;
        let mut mx = F::neg_infinity();
        for (j, slot) in scores.iter_mut().enumerate() {
            let mut sc = F::zero();
            for t in 0..dh {
                sc = sc + q[c0 + t] * k[[j, c0 + t]];
            }
            sc = sc * scale;
            *slot = sc;
            if sc > mx {
                mx = sc;
            }
        }
        let mut z = F::zero();
        for slot in scores.iter_mut() {
            *slot = (*slot - mx).exp();
            z = z + *slot;
        }
        for (j, slot) in scores.iter().enumerate() {
            let p = *slot / z;
            for t in 0..dh {
                ctx[c0 + t] = ctx[c0 + t] + p * v[[j, c0 + t]];
            }
        }
    }
    ctx
}

fn precompute_cross<F: Scalar>(
    params: &Tensors<F>,
    cfg: &ModelConfig,
    memory: &Array2<F>,
) -> CrossCtx<F> {
    let mut k = Vec::with_capacity(cfg.n_dec_blocks);
    let mut v = Vec::with_capacity(cfg.n_dec_blocks);
    for i in 0..cfg.n_dec_blocks {
        k.push(memory.dot(&params.get2(&format!("dec.{i}.xattn.wk"))));
        v.push(memory.dot(&params.get2(&format!("dec.{i}.xattn.wv"))));
    }
    CrossCtx { k, v }
}

/// Feed one token at position `pos`; returns the logits for the next token.
/// Appends this position's self-attention K/V rows to `state`.
fn dec_step<F: Scalar>(
    params: &Tensors<F>,
    cfg: &ModelConfig,
    cross: &CrossCtx<F>,
    state: &mut DecState<F>,
    pos: usize,
    token: u32,
) -> Array1<F> {
    assert!(pos < cfg.max_tgt_len, "decode position exceeds max_tgt_len");
    let emb = params.get2("tgt_embed");
    let pos_tab = params.get2("tgt_pos");
    let mut x: Array1<F> = &emb.row(token as usize) + &pos_tab.row(pos);
    for i in 0..cfg.n_dec_blocks {
        let p = format!("dec.{i}");
        // Causal self-attention over the cached prefix plus this position.
        let a = ln_row(&x, params.get1(&format!("{p}.ln1.g")));
        let q = a.dot(&params.get2(&format!("{p}.attn.wq")));
        let kn = a.dot(&params.get2(&format!("{p}.attn.wk")));
        let vn = a.dot(&params.get2(&format!("{p}.attn.wv")));
        state.self_k[i].push_row(kn.view()).expect("cache rows are d_model wide");
        state.self_v[i].push_row(vn.view()).expect("cache rows are d_model wide");
        let ctx = mha_row(&q, &state.self_k[i], &state.self_v[i], cfg.n_heads);
        x = x + ctx.dot(&params.get2(&format!("{p}.attn.wo")));
        // Cross-attention over the precomputed memory projections.
        let b = ln_row(&x, params.get1(&format!("{p}.ln2.g")));
        let q2 = b.dot(&params.get2(&format!("{p}.xattn.wq")));
        let ctx2 = mha_row(&q2, &cross.k[i], &cross.v[i], cfg.n_heads);
        x = x + ctx2.dot(&params.get2(&format!("{p}.xattn.wo")));
        // Feed-forward.
        let c = ln_row(&x, params.get1(&format!("{p}.ln3.g")));
        let mut h = c.dot(&params.get2(&format!("{p}.ffn.w1")));
        h.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
        x = x + h.dot(&params.get2(&format!("{p}.ffn.w2")));
    }
    let y = ln_row(&x, params.get1("dec.final_ln.g"));
    y.dot(&params.get2("out_proj"))
}

/// Greedy argmax decode; ties resolve to the lowest token id. Returns the
/// full token sequence (including `<bos>` and, if produced, `<eos>`) plus
/// the per-step logits for equivalence testing.
fn greedy<F: Scalar>(
    params: &Tensors<F>,
    cfg: &ModelConfig,
    cross: &CrossCtx<F>,
) -> (Vec<u32>, Vec<Array1<F>>) {
    let mut state = DecState::new(cfg);
    let mut tokens = vec![BOS_ID];
    let mut step_logits = Vec::new();
    while tokens.len() < cfg.max_tgt_len {
        let pos = tokens.len() - 1;
        let logits = dec_step(params, cfg, cross, &mut state, pos, tokens[pos]);
        let mut best = 0usize;
        for j in 1..logits.len() {
            if logits[j] > logits[best] {
                best = j;
            }
        }
        tokens.push(best as u32);
        step_logits.push(logits);
        if best as u32 == EOS_ID {
            break;
        }
    }
    (tokens, step_logits)
}

fn log_softmax_f64<F: Scalar>(logits: &Array1<F>) -> Vec<f64> {
    let row: Vec<f64> = logits.iter().map(|x| x.to_f64().unwrap()).collect();
    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = row.iter().map(|x| (x - mx).exp()).sum();
    let lse = mx + z.ln();
    row.into_iter().map(|x| x - lse).collect()
}

struct Hyp<F> {
    tokens: Vec<u32>,
    sum_lp: f64,
    state: DecState<F>,
}

impl<F> Hyp<F> {
    /// Mean log-probability per generated token.
    fn norm_score(&self) -> f64 {
        self.sum_lp / (self.tokens.len() - 1).max(1) as f64
    }
}

/// Length-normalized beam search. Hypotheses retire on `<eos>` or at the
/// length cap; the best finished hypothesis by mean token log-probability
/// wins, ties broken toward the lexicographically smaller token sequence.
fn beam<F: Scalar>(
    params: &Tensors<F>,
    cfg: &ModelConfig,
    cross: &CrossCtx<F>,
    width: usize,
) -> Vec<u32> {
    beam_scored(params, cfg, cross, width).0
}

/// [`beam`] plus the winner's normalized score, for bookkeeping tests.
fn beam_scored<F: Scalar>(
    params: &Tensors<F>,
    cfg: &ModelConfig,
    cross: &CrossCtx<F>,
    width: usize,
) -> (Vec<u32>, f64) {
    assert!(width >= 1, "beam width must be at least 1");
    let mut active = vec![Hyp { tokens: vec![BOS_ID], sum_lp: 0.0, state: DecState::new(cfg) }];
    let mut finished: Vec<Hyp<F>> = Vec::new();
    while !active.is_empty() {
        // (parent index, token, cumulative score)
        let mut candidates: Vec<(usize, u32, f64)> = Vec::new();
        for (pi, hyp) in active.iter_mut().enumerate() {
            let pos = hyp.tokens.len() - 1;
            let logits = dec_step(params, cfg, cross, &mut hyp.state, pos, hyp.tokens[pos]);
            for (tok, lp) in log_softmax_f64(&logits).into_iter().enumerate() {
                candidates.push((pi, tok as u32, hyp.sum_lp + lp));
            }
        }
        candidates.sort_by(|a, b| {
            b.2.total_cmp(&a.2).then_with(|| {
                // Equal scores: prefer the smaller full token sequence.
                let sa = (&active[a.0].tokens, a.1);
                let sb = (&active[b.0].tokens, b.1);
                sa.cmp(&sb)
            })
        });
        let mut next_active = Vec::with_capacity(width);
        for &(pi, tok, score) in candidates.iter().take(width) {
            let parent = &active[pi];
            let mut tokens = parent.tokens.clone();
            tokens.push(tok);
            let hyp = Hyp { tokens, sum_lp: score, state: parent.state.clone() };
            if tok == EOS_ID || hyp.tokens.len() >= cfg.max_tgt_len {
                finished.push(hyp);
            } else {
                next_active.push(hyp);
            }
        }
        active = next_active;
        if finished.len() >= width {
            break;
        }
    }
    finished.extend(active);
    let best = finished
        .into_iter()
        .max_by(|a, b| {
            a.norm_score()
                .total_cmp(&b.norm_score())
                .then_with(|| b.tokens.cmp(&a.tokens)) // smaller sequence wins ties
        })
        .expect("beam always finishes at least one hypothesis");
    let score = best.norm_score();
    (best.tokens, score)
}

/// Decode a program token sequence from one assembled (unpadded) visual
/// token sequence.
pub fn synthesize<F: Scalar>(
    params: &Tensors<F>,
    cfg: &ModelConfig,
    src_ids: &[u32],
    mode: DecodeMode,
) -> Vec<u32> {
    assert!(!src_ids.is_empty(), "cannot decode from an empty source");
    assert!(src_ids.len() <= cfg.max_src_len, "source exceeds max_src_len");
    let memory = encode_memory::<F>(params, cfg, src_ids);
    let cross = precompute_cross(params, cfg, &memory);
    match mode {
        DecodeMode::Greedy => greedy(params, cfg, &cross).0,
        DecodeMode::Beam(w) => beam(params, cfg, &cross, w),
    }
}
