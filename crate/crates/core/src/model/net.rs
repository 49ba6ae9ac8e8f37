//! Full network: pre-norm encoder-decoder forward pass, cross-entropy loss,
//! and the hand-written backward pass.
//!
//! Block layout (pre-norm, no biases, gain-only layer norms):
//!   encoder: x += Drop(SelfAttn(LN1(x)));  x += Drop(FFN(LN2(x)))
//!   decoder: x += Drop(CausalSelfAttn(LN1(x)));
//!            x += Drop(CrossAttn(LN2(x), memory));
//!            x += Drop(FFN(LN3(x)))
//! with a final layer norm on each stack and a linear readout to the program
//! vocabulary. Source padding is excluded via key masks in encoder
//! self-attention and decoder cross-attention; target padding sits at the
//! tail and is handled by the causal mask plus loss masking.

use super::layers::{
    attn_bwd, attn_fwd, dropout, dropout_bwd, embed, embed_bwd, layer_norm,
    layer_norm_bwd, proj, proj_bwd_w, proj_bwd_x, relu, relu_bwd, LnCache,
};
use super::{ModelConfig, Scalar, Tensors};
use crate::rng::CounterRng;
use ndarray::{Array1, Array2, Array3};

/// One teacher-forced training/eval batch. `src_mask` is true at real
/// source tokens; target padding is id 0 in `tgt_out` and is ignored by the
/// loss. All rows are right-padded.
#[derive(Debug, Clone)]
pub struct Batch {
    pub src: Array2<u32>,
    pub src_mask: Array2<bool>,
    pub tgt_in: Array2<u32>,
    pub tgt_out: Array2<u32>,
}

/// Teacher-forced token counts over the non-pad target positions.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenStats {
    pub n_tokens: usize,
    pub n_correct: usize,
}

impl TokenStats {
    pub fn accuracy(&self) -> f64 {
        if self.n_tokens == 0 {
            0.0
        } else {
            self.n_correct as f64 / self.n_tokens as f64
        }
    }
}

struct AttnSite<F> {
    q: Array3<F>,
    k: Array3<F>,
    v: Array3<F>,
    drop: Option<Array3<F>>,
}

struct EncBlockCache<F> {
    ln1: LnCache<F>,
    attn: AttnSite<F>,
    ln2: LnCache<F>,
    ffn_post: Array3<F>,
    ffn_drop: Option<Array3<F>>,
}

struct DecBlockCache<F> {
    ln1: LnCache<F>,
    self_attn: AttnSite<F>,
    ln2: LnCache<F>,
    cross: AttnSite<F>,
    ln3: LnCache<F>,
    ffn_post: Array3<F>,
    ffn_drop: Option<Array3<F>>,
}

struct EncCache<F> {
    emb_drop: Option<Array3<F>>,
    blocks: Vec<EncBlockCache<F>>,
    final_ln: LnCache<F>,
}

/// Everything the backward pass needs; opaque to callers.
pub struct Cache<F> {
    enc: EncCache<F>,
    memory: Array3<F>,
    dec_emb_drop: Option<Array3<F>>,
    dec_blocks: Vec<DecBlockCache<F>>,
    dec_final: LnCache<F>,
}

/// Attention sublayer forward: LN → QKV → attention → output projection →
/// dropout → residual add into `x`. For cross-attention `kv_src` carries the
/// (already normalized) encoder memory.
#[allow(clippy::too_many_arguments)]
fn attn_sublayer<F: Scalar>(
    x: &mut Array3<F>,
    params: &Tensors<F>,
    prefix: &str,
    ln_name: &str,
    kv_src: Option<&Array3<F>>,
    n_heads: usize,
    key_mask: Option<&Array2<bool>>,
    causal: bool,
    p_drop: f64,
    drop_rng: &mut Option<&mut CounterRng>,
) -> (LnCache<F>, AttnSite<F>) {
    let (a, ln) = layer_norm(x, params.get1(ln_name));
    let kv_in = kv_src.unwrap_or(&a);
    let q = proj(&a, params.get2(&format!("{prefix}.wq")));
    let k = proj(kv_in, params.get2(&format!("{prefix}.wk")));
    let v = proj(kv_in, params.get2(&format!("{prefix}.wv")));
    let ctx = attn_fwd(&q, &k, &v, n_heads, key_mask, causal);
    let mut out = proj(&ctx, params.get2(&format!("{prefix}.wo")));
    let drop = dropout(&mut out, p_drop, drop_rng.as_deref_mut());
    *x += &out;
    (ln, AttnSite { q, k, v, drop })
}

/// FFN sublayer forward: LN → W1 → relu → W2 → dropout → residual.
fn ffn_sublayer<F: Scalar>(
    x: &mut Array3<F>,
    params: &Tensors<F>,
    prefix: &str,
    ln_name: &str,
    p_drop: f64,
    drop_rng: &mut Option<&mut CounterRng>,
) -> (LnCache<F>, Array3<F>, Option<Array3<F>>) {
    let (a, ln) = layer_norm(x, params.get1(ln_name));
    let mut h = proj(&a, params.get2(&format!("{prefix}.w1")));
    relu(&mut h);
    let mut f = proj(&h, params.get2(&format!("{prefix}.w2")));
    let drop = dropout(&mut f, p_drop, drop_rng.as_deref_mut());
    *x += &f;
    (ln, h, drop)
}

fn encoder_fwd<F: Scalar>(
    params: &Tensors<F>,
    cfg: &ModelConfig,
    src: &Array2<u32>,
    src_mask: &Array2<bool>,
    drop_rng: &mut Option<&mut CounterRng>,
) -> (Array3<F>, EncCache<F>) {
    assert!(src.dim().1 <= cfg.max_src_len, "source exceeds max_src_len");
    let mut x = embed(src, params.get2("src_embed"), params.get2("src_pos"));
    let emb_drop = dropout(&mut x, cfg.dropout, drop_rng.as_deref_mut());
    let mut blocks = Vec::with_capacity(cfg.n_enc_blocks);
    for i in 0..cfg.n_enc_blocks {
        let p = format!("enc.{i}");
        let (ln1, attn) = attn_sublayer(
            &mut x,
            params,
            &format!("{p}.attn"),
            &format!("{p}.ln1.g"),
            None,
            cfg.n_heads,
            Some(src_mask),
            false,
            cfg.dropout,
            drop_rng,
        );
        let (ln2, ffn_post, ffn_drop) = ffn_sublayer(
            &mut x,
            params,
            &format!("{p}.ffn"),
            &format!("{p}.ln2.g"),
            cfg.dropout,
            drop_rng,
        );
        blocks.push(EncBlockCache { ln1, attn, ln2, ffn_post, ffn_drop });
    }
    let (memory, final_ln) = layer_norm(&x, params.get1("enc.final_ln.g"));
    (memory, EncCache { emb_drop, blocks, final_ln })
}

/// Encode a single unpadded source sequence; used by incremental decoding.
pub(crate) fn encode_memory<F: Scalar>(
    params: &Tensors<F>,
    cfg: &ModelConfig,
    src_ids: &[u32],
) -> Array2<F> {
    let l = src_ids.len();
    let src = Array2::from_shape_vec((1, l), src_ids.to_vec()).unwrap();
    let mask = Array2::from_elem((1, l), true);
    let (memory, _) = encoder_fwd::<F>(params, cfg, &src, &mask, &mut None);
    memory.index_axis_move(ndarray::Axis(0), 0)
}

/// Full teacher-forced forward pass. Returns logits `[B, Lt, tgt_vocab]`
/// and the cache consumed by [`grad`]. Pass a dropout RNG only in training.
pub fn forward<F: Scalar>(
    params: &Tensors<F>,
    cfg: &ModelConfig,
    batch: &Batch,
    mut drop_rng: Option<&mut CounterRng>,
) -> (Array3<F>, Cache<F>) {
    assert_eq!(batch.src.dim(), batch.src_mask.dim());
    assert_eq!(batch.tgt_in.dim(), batch.tgt_out.dim());
    assert!(batch.tgt_in.dim().1 <= cfg.max_tgt_len, "target exceeds max_tgt_len");
    let (memory, enc) =
        encoder_fwd(params, cfg, &batch.src, &batch.src_mask, &mut drop_rng);

    let mut x = embed(&batch.tgt_in, params.get2("tgt_embed"), params.get2("tgt_pos"));
    let dec_emb_drop = dropout(&mut x, cfg.dropout, drop_rng.as_deref_mut());
    let mut dec_blocks = Vec::with_capacity(cfg.n_dec_blocks);
    for i in 0..cfg.n_dec_blocks {
        let p = format!("dec.{i}");
        let (ln1, self_attn) = attn_sublayer(
            &mut x,
            params,
            &format!("{p}.attn"),
            &format!("{p}.ln1.g"),
            None,
            cfg.n_heads,
            None,
            true,
            cfg.dropout,
            &mut drop_rng,
        );
        let (ln2, cross) = attn_sublayer(
            &mut x,
            params,
            &format!("{p}.xattn"),
            &format!("{p}.ln2.g"),
            Some(&memory),
            cfg.n_heads,
            Some(&batch.src_mask),
            false,
            cfg.dropout,
            &mut drop_rng,
        );
        let (ln3, ffn_post, ffn_drop) = ffn_sublayer(
            &mut x,
            params,
            &format!("{p}.ffn"),
            &format!("{p}.ln3.g"),
            cfg.dropout,
            &mut drop_rng,
        );
        dec_blocks.push(DecBlockCache {
            ln1,
            self_attn,
            ln2,
            cross,
            ln3,
            ffn_post,
            ffn_drop,
        });
    }
    let (y, dec_final) = layer_norm(&x, params.get1("dec.final_ln.g"));
    let logits = proj(&y, params.get2("out_proj"));
    (logits, Cache { enc, memory, dec_emb_drop, dec_blocks, dec_final })
}

/// Mean cross-entropy over non-pad target positions, with the exact
/// gradient w.r.t. the logits. The reduction runs in `f64` regardless of `F`
/// so reported losses are comparable across instantiations.
pub fn loss_from_logits<F: Scalar>(
    logits: &Array3<F>,
    tgt_out: &Array2<u32>,
) -> (f64, TokenStats, Array3<F>) {
    let (b, l, v) = logits.dim();
    assert_eq!(tgt_out.dim(), (b, l));
    let mut dlogits = Array3::zeros((b, l, v));
    let mut total = 0.0f64;
    let mut stats = TokenStats::default();
    for bi in 0..b {
        for li in 0..l {
            let tgt = tgt_out[[bi, li]] as usize;
            if tgt == 0 {
                continue; // pad: no loss, zero gradient
            }
            assert!(tgt < v, "target id {tgt} out of vocabulary");
            stats.n_tokens += 1;
            let row = logits.index_axis(ndarray::Axis(0), bi);
            let row = row.row(li);
            let mut mx = f64::NEG_INFINITY;
            let mut argmax = 0usize;
            for (j, &x) in row.iter().enumerate() {
                let x = x.to_f64().unwrap();
                if x > mx {
                    mx = x;
                    argmax = j;
                }
            }
            if argmax == tgt {
                stats.n_correct += 1;
            }
            let mut z = 0.0f64;
            for &x in row.iter() {
                z += (x.to_f64().unwrap() - mx).exp();
            }
            let lse = mx + z.ln();
            total += lse - row[tgt].to_f64().unwrap();
            let mut drow = dlogits.index_axis_mut(ndarray::Axis(0), bi);
            let mut drow = drow.row_mut(li);
            for j in 0..v {
                let p = (row[j].to_f64().unwrap() - lse).exp();
                drow[j] = F::from(p).unwrap();
            }
            drow[tgt] = drow[tgt] - F::one();
        }
    }
    let n = stats.n_tokens.max(1);
    let inv = F::from(1.0 / n as f64).unwrap();
    dlogits.mapv_inplace(|x| x * inv);
    (total / n as f64, stats, dlogits)
}

/// Eval-mode loss (no dropout).
pub fn loss<F: Scalar>(
    params: &Tensors<F>,
    cfg: &ModelConfig,
    batch: &Batch,
) -> (f64, TokenStats) {
    let (logits, _) = forward(params, cfg, batch, None);
    let (l, stats, _) = loss_from_logits(&logits, &batch.tgt_out);
    (l, stats)
}

/// Backward through one attention sublayer. `dx` holds the gradient at the
/// sublayer *output* on entry and the gradient at its *input* on exit; for
/// cross-attention the key/value gradient is accumulated into `dmem`.
#[allow(clippy::too_many_arguments)]
fn attn_sublayer_bwd<F: Scalar>(
    dx: &mut Array3<F>,
    params: &Tensors<F>,
    grads: &mut Tensors<F>,
    prefix: &str,
    ln_name: &str,
    ln: &LnCache<F>,
    site: &AttnSite<F>,
    kv_src: Option<(&Array3<F>, &mut Array3<F>)>,
    n_heads: usize,
    key_mask: Option<&Array2<bool>>,
    causal: bool,
) {
    let wq = params.get2(&format!("{prefix}.wq"));
    let wk = params.get2(&format!("{prefix}.wk"));
    let wv = params.get2(&format!("{prefix}.wv"));
    let wo = params.get2(&format!("{prefix}.wo"));
    let g = params.get1(ln_name);

    let mut dout = dx.clone();
    dropout_bwd(&mut dout, &site.drop);
    // Recompute the context rather than caching it.
    let ctx = attn_fwd(&site.q, &site.k, &site.v, n_heads, key_mask, causal);
    grads.accum(&format!("{prefix}.wo"), proj_bwd_w(&ctx, &dout));
    let dctx = proj_bwd_x(&dout, wo);
    let (dq, dk, dv) = attn_bwd(&site.q, &site.k, &site.v, n_heads, key_mask, causal, &dctx);

    let ln_out = ln.output(g);
    grads.accum(&format!("{prefix}.wq"), proj_bwd_w(&ln_out, &dq));
    let mut d_ln_out = proj_bwd_x(&dq, wq);
    match kv_src {
        Some((kv_in, dmem)) => {
            grads.accum(&format!("{prefix}.wk"), proj_bwd_w(kv_in, &dk));
            grads.accum(&format!("{prefix}.wv"), proj_bwd_w(kv_in, &dv));
            *dmem += &proj_bwd_x(&dk, wk);
            *dmem += &proj_bwd_x(&dv, wv);
        }
        None => {
            grads.accum(&format!("{prefix}.wk"), proj_bwd_w(&ln_out, &dk));
            grads.accum(&format!("{prefix}.wv"), proj_bwd_w(&ln_out, &dv));
            d_ln_out += &proj_bwd_x(&dk, wk);
            d_ln_out += &proj_bwd_x(&dv, wv);
        }
    }
    let mut dg = Array1::zeros(g.len());
    let dxin = layer_norm_bwd(ln, g, &d_ln_out, &mut dg);
    grads.accum(ln_name, dg);
    *dx += &dxin;
}

/// Backward through one FFN sublayer (same `dx` in/out convention).
#[allow(clippy::too_many_arguments)]
fn ffn_sublayer_bwd<F: Scalar>(
    dx: &mut Array3<F>,
    params: &Tensors<F>,
    grads: &mut Tensors<F>,
    prefix: &str,
    ln_name: &str,
    ln: &LnCache<F>,
    ffn_post: &Array3<F>,
    ffn_drop: &Option<Array3<F>>,
) {
    let w1 = params.get2(&format!("{prefix}.w1"));
    let w2 = params.get2(&format!("{prefix}.w2"));
    let g = params.get1(ln_name);

    let mut df = dx.clone();
    dropout_bwd(&mut df, ffn_drop);
    grads.accum(&format!("{prefix}.w2"), proj_bwd_w(ffn_post, &df));
    let mut dh = proj_bwd_x(&df, w2);
    relu_bwd(&mut dh, ffn_post);
    let ln_out = ln.output(g);
    grads.accum(&format!("{prefix}.w1"), proj_bwd_w(&ln_out, &dh));
    let d_ln_out = proj_bwd_x(&dh, w1);
    let mut dg = Array1::zeros(g.len());
    let dxin = layer_norm_bwd(ln, g, &d_ln_out, &mut dg);
    grads.accum(ln_name, dg);
    *dx += &dxin;
}

/// Loss, token stats, and full parameter gradients for one batch.
pub fn grad<F: Scalar>(
    params: &Tensors<F>,
    cfg: &ModelConfig,
    batch: &Batch,
    drop_rng: Option<&mut CounterRng>,
) -> (f64, TokenStats, Tensors<F>) {
    let (logits, cache) = forward(params, cfg, batch, drop_rng);
    let (loss, stats, dlogits) = loss_from_logits(&logits, &batch.tgt_out);
    let mut grads = params.zeros_like();

    // Readout and decoder final norm.
    let g_final = params.get1("dec.final_ln.g");
    let y = cache.dec_final.output(g_final);
    grads.accum("out_proj", proj_bwd_w(&y, &dlogits));
    let dy = proj_bwd_x(&dlogits, params.get2("out_proj"));
    let mut dg = Array1::zeros(g_final.len());
    let mut dx = layer_norm_bwd(&cache.dec_final, g_final, &dy, &mut dg);
    grads.accum("dec.final_ln.g", dg);

    // Decoder blocks in reverse; cross-attention accumulates into dmem.
    let mut dmem: Array3<F> = Array3::zeros(cache.memory.raw_dim());
    for (i, blk) in cache.dec_blocks.iter().enumerate().rev() {
        let p = format!("dec.{i}");
        ffn_sublayer_bwd(
            &mut dx,
            params,
            &mut grads,
            &format!("{p}.ffn"),
            &format!("{p}.ln3.g"),
            &blk.ln3,
            &blk.ffn_post,
            &blk.ffn_drop,
        );
        attn_sublayer_bwd(
            &mut dx,
            params,
            &mut grads,
            &format!("{p}.xattn"),
            &format!("{p}.ln2.g"),
            &blk.ln2,
            &blk.cross,
            Some((&cache.memory, &mut dmem)),
            cfg.n_heads,
            Some(&batch.src_mask),
            false,
        );
        attn_sublayer_bwd(
            &mut dx,
            params,
            &mut grads,
            &format!("{p}.attn"),
            &format!("{p}.ln1.g"),
            &blk.ln1,
            &blk.self_attn,
            None,
            cfg.n_heads,
            None,
            true,
        );
    }
    dropout_bwd(&mut dx, &cache.dec_emb_drop);
    let (dt, dp) = embed_bwd(&batch.tgt_in, &dx, cfg.tgt_vocab, cfg.max_tgt_len);
    grads.accum("tgt_embed", dt);
    grads.accum("tgt_pos", dp);

    // Encoder final norm and blocks.
    let g_enc = params.get1("enc.final_ln.g");
    let mut dg = Array1::zeros(g_enc.len());
    let mut dxe = layer_norm_bwd(&cache.enc.final_ln, g_enc, &dmem, &mut dg);
    grads.accum("enc.final_ln.g", dg);
    for (i, blk) in cache.enc.blocks.iter().enumerate().rev() {
        let p = format!("enc.{i}");
        ffn_sublayer_bwd(
            &mut dxe,
            params,
            &mut grads,
            &format!("{p}.ffn"),
            &format!("{p}.ln2.g"),
            &blk.ln2,
            &blk.ffn_post,
            &blk.ffn_drop,
        );
        attn_sublayer_bwd(
            &mut dxe,
            params,
            &mut grads,
            &format!("{p}.attn"),
            &format!("{p}.ln1.g"),
            &blk.ln1,
            &blk.attn,
            None,
            cfg.n_heads,
            Some(&batch.src_mask),
            false,
        );
    }
    dropout_bwd(&mut dxe, &cache.enc.emb_drop);
    let (dt, dp) = embed_bwd(&batch.src, &dxe, cfg.src_vocab, cfg.max_src_len);
    grads.accum("src_embed", dt);
    grads.accum("src_pos", dp);

    (loss, stats, grads)
}
