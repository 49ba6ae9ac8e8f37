//! Layer primitives with explicit forward and backward passes.
//!
//! Conventions: activations are `[batch, len, d_model]` arrays in standard
//! (C) layout; projections flatten to 2-D and use one `dot` per call so the
//! BLAS-style kernel in `ndarray` does the heavy lifting. Attention keeps
//! only Q/K/V and recomputes the softmax probabilities in the backward pass;
//! at the desk-scale sequence lengths the probability tensors dwarf every
//! other activation, and recomputing them trades a modest amount of time for
//! a flat memory profile.

use super::{sf, Scalar};
use crate::rng::CounterRng;
use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2};

pub(crate) const LN_EPS: f64 = 1e-5;

// ---------------------------------------------------------------- layernorm

/// Per-position statistics saved for the backward pass.
pub(crate) struct LnCache<F> {
    pub xhat: Array3<F>,
    pub inv_std: Array2<F>,
}

impl<F: Scalar> LnCache<F> {
    /// The layer output `g ⊙ x̂`, recomputed on demand so it is not cached.
    pub fn output(&self, g: ArrayView1<F>) -> Array3<F> {
        let mut y = self.xhat.clone();
        let (b, l, _) = y.dim();
        for bi in 0..b {
            for li in 0..l {
                let mut row = y.slice_mut(s![bi, li, ..]);
                row *= &g;
            }
        }
        y
    }
}

/// Gain-only layer norm over the last axis: `y = g ⊙ (x − μ) / √(σ² + ε)`.
pub(crate) fn layer_norm<F: Scalar>(
    x: &Array3<F>,
    g: ArrayView1<F>,
) -> (Array3<F>, LnCache<F>) {
    let (b, l, d) = x.dim();
    let mut xhat = Array3::zeros((b, l, d));
    let mut inv_std = Array2::zeros((b, l));
    let mut y = Array3::zeros((b, l, d));
    let eps = sf::<F>(LN_EPS);
    let dn = sf::<F>(d as f64);
    for bi in 0..b {
        for li in 0..l {
            let row = x.slice(s![bi, li, ..]);
            let mu = row.sum() / dn;
            let mut var = F::zero();
            for &v in row.iter() {
                var = var + (v - mu) * (v - mu);
            }
            var = var / dn;
            let inv = F::one() / (var + eps).sqrt();
            inv_std[[bi, li]] = inv;
            let mut xh = xhat.slice_mut(s![bi, li, ..]);
            let mut yr = y.slice_mut(s![bi, li, ..]);
            for j in 0..d {
                let h = (row[j] - mu) * inv;
                xh[j] = h;
                yr[j] = g[j] * h;
            }
        }
    }
    (y, LnCache { xhat, inv_std })
}

/// Backward of [`layer_norm`]. Returns `dx`; accumulates `dg` into the
/// provided buffer.
pub(crate) fn layer_norm_bwd<F: Scalar>(
    cache: &LnCache<F>,
    g: ArrayView1<F>,
    dy: &Array3<F>,
    dg: &mut Array1<F>,
) -> Array3<F> {
    let (b, l, d) = cache.xhat.dim();
    let mut dx = Array3::zeros((b, l, d));
    let dn = sf::<F>(d as f64);
    for bi in 0..b {
        for li in 0..l {
            let xh = cache.xhat.slice(s![bi, li, ..]);
            let dyr = dy.slice(s![bi, li, ..]);
            let inv = cache.inv_std[[bi, li]];
            // dxhat = g ⊙ dy; dx = inv(dxhat − mean(dxhat) − x̂·mean(dxhat⊙x̂))
            let mut mean_dxh = F::zero();
            let mut mean_dxh_xh = F::zero();
            for j in 0..d {
                let dxh = g[j] * dyr[j];
                mean_dxh = mean_dxh + dxh;
                mean_dxh_xh = mean_dxh_xh + dxh * xh[j];
                dg[j] = dg[j] + dyr[j] * xh[j];
            }
            mean_dxh = mean_dxh / dn;
            mean_dxh_xh = mean_dxh_xh / dn;
            let mut dxr = dx.slice_mut(s![bi, li, ..]);
            for j in 0..d {
                let dxh = g[j] * dyr[j];
                dxr[j] = inv * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
            }
        }
    }
    dx
}

// -------------------------------------------------------------- projections

/// `[B,L,d] · [d,n] → [B,L,n]`, flattened to a single 2-D matmul.
pub(crate) fn proj<F: Scalar>(x: &Array3<F>, w: ArrayView2<F>) -> Array3<F> {
    let (b, l, d) = x.dim();
    let n = w.dim().1;
    let x2 = x
        .view()
        .into_shape((b * l, d))
        .expect("activations are standard layout");
    x2.dot(&w).into_shape((b, l, n)).expect("matmul output is contiguous")
}

/// Weight gradient `xᵀ · dy` for [`proj`].
pub(crate) fn proj_bwd_w<F: Scalar>(x: &Array3<F>, dy: &Array3<F>) -> Array2<F> {
    let (b, l, d) = x.dim();
    let n = dy.dim().2;
    let x2 = x.view().into_shape((b * l, d)).unwrap();
    let dy2 = dy.view().into_shape((b * l, n)).unwrap();
    x2.t().dot(&dy2)
}

/// Input gradient `dy · wᵀ` for [`proj`].
pub(crate) fn proj_bwd_x<F: Scalar>(dy: &Array3<F>, w: ArrayView2<F>) -> Array3<F> {
    let (b, l, n) = dy.dim();
    let d = w.dim().0;
    let dy2 = dy.view().into_shape((b * l, n)).unwrap();
    dy2.dot(&w.t()).into_shape((b, l, d)).unwrap()
}

// ---------------------------------------------------------------- attention

/// In-place masked softmax over the rows of a score matrix.
///
/// Masked entries (`causal` upper triangle and/or keys where `key_mask` is
/// false) are sent to −∞ before the usual max-shifted exponentiation, which
/// makes their probabilities exactly 0.0 — the property the causality and
/// padding tests rely on.
pub fn masked_softmax<F: Scalar>(
    scores: &mut Array2<F>,
    key_mask: Option<ArrayView1<'_, bool>>,
    causal: bool,
) {
    let (lq, lk) = scores.dim();
    for i in 0..lq {
        let mut row = scores.row_mut(i);
        let mut n_live = 0usize;
        for j in 0..lk {
            let dead = (causal && j > i) || key_mask.map_or(false, |m| !m[j]);
            if dead {
                row[j] = F::neg_infinity();
            } else {
                n_live += 1;
            }
        }
        // Structural check only: overflowed/NaN scores of a diverged run
        // must flow through to the loss's finiteness check instead.
        debug_assert!(n_live > 0, "attention row fully masked");
        let mut mx = F::neg_infinity();
        for &x in row.iter() {
            if x > mx {
                mx = x;
            }
        }
        let mut sum = F::zero();
        for x in row.iter_mut() {
            *x = (*x - mx).exp();
            sum = sum + *x;
        }
        for x in row.iter_mut() {
            *x = *x / sum;
        }
    }
}

/// Multi-head scaled dot-product attention. `q,k,v` are `[B, L, d_model]`
/// with heads packed along the feature axis; returns the context in the same
/// packed layout (before the output projection).
pub(crate) fn attn_fwd<F: Scalar>(
    q: &Array3<F>,
    k: &Array3<F>,
    v: &Array3<F>,
    n_heads: usize,
    key_mask: Option<&Array2<bool>>,
    causal: bool,
) -> Array3<F> {
    let (b, lq, d) = q.dim();
    let dh = d / n_heads;
    let scale = sf::<F>(1.0 / (dh as f64).sqrt());
    let mut ctx = Array3::zeros((b, lq, d));
    for bi in 0..b {
        let mask = key_mask.map(|m| m.row(bi));
        for h in 0..n_heads {
            let cols = h * dh..(h + 1) * dh;
            let qh = q.slice(s![bi, .., cols.clone()]);
            let kh = k.slice(s![bi, .., cols.clone()]);
            let vh = v.slice(s![bi, .., cols.clone()]);
            let mut a = qh.dot(&kh.t());
            a.mapv_inplace(|x| x * scale);
            masked_softmax(&mut a, mask, causal);
            ctx.slice_mut(s![bi, .., cols]).assign(&a.dot(&vh));
        }
    }
    ctx
}

/// Backward of [`attn_fwd`]. Recomputes the probability matrices from the
/// cached Q/K/V rather than storing them.
pub(crate) fn attn_bwd<F: Scalar>(
    q: &Array3<F>,
    k: &Array3<F>,
    v: &Array3<F>,
    n_heads: usize,
    key_mask: Option<&Array2<bool>>,
    causal: bool,
    dctx: &Array3<F>,
) -> (Array3<F>, Array3<F>, Array3<F>) {
    let (b, lq, d) = q.dim();
    let dh = d / n_heads;
    let scale = sf::<F>(1.0 / (dh as f64).sqrt());
    let mut dq = Array3::zeros(q.raw_dim());
    let mut dk = Array3::zeros(k.raw_dim());
    let mut dv = Array3::zeros(v.raw_dim());
    for bi in 0..b {
        let mask = key_mask.map(|m| m.row(bi));
        for h in 0..n_heads {
            let cols = h * dh..(h + 1) * dh;
            let qh = q.slice(s![bi, .., cols.clone()]);
            let kh = k.slice(s![bi, .., cols.clone()]);
            let vh = v.slice(s![bi, .., cols.clone()]);
            let dctx_h = dctx.slice(s![bi, .., cols.clone()]);
            let mut a = qh.dot(&kh.t());
            a.mapv_inplace(|x| x * scale);
            masked_softmax(&mut a, mask, causal);
            let da = dctx_h.dot(&vh.t());
            dv.slice_mut(s![bi, .., cols.clone()])
                .assign(&a.t().dot(&dctx_h));
            // Softmax backward: dS = A ⊙ (dA − Σ_j A·dA), row-wise. Masked
            // entries have A = 0, so their dS is exactly 0 as required.
            let mut ds = da;
            for i in 0..lq {
                let arow = a.row(i);
                let mut inner = F::zero();
                for j in 0..arow.len() {
                    inner = inner + arow[j] * ds[[i, j]];
                }
                for j in 0..arow.len() {
                    ds[[i, j]] = arow[j] * (ds[[i, j]] - inner);
                }
            }
            ds.mapv_inplace(|x| x * scale);
            dq.slice_mut(s![bi, .., cols.clone()]).assign(&ds.dot(&kh));
            dk.slice_mut(s![bi, .., cols]).assign(&ds.t().dot(&qh));
        }
    }
    (dq, dk, dv)
}

// --------------------------------------------------------------------- relu

pub(crate) fn relu<F: Scalar>(x: &mut Array3<F>) {
    x.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
}

/// Backward through relu given the *post*-activation values: the gradient
/// passes wherever the output is strictly positive.
pub(crate) fn relu_bwd<F: Scalar>(dy: &mut Array3<F>, post: &Array3<F>) {
    ndarray::Zip::from(dy).and(post).for_each(|g, &y| {
        if y <= F::zero() {
            *g = F::zero();
        }
    });
}

// ------------------------------------------------------------------ dropout

/// Inverted dropout. In eval mode (`rng` None or `p == 0`) this is an exact
/// no-op and returns no mask. The returned mask already bakes in the
/// 1/(1−p) rescale so backward is a plain elementwise multiply.
pub(crate) fn dropout<F: Scalar>(
    x: &mut Array3<F>,
    p: f64,
    rng: Option<&mut CounterRng>,
) -> Option<Array3<F>> {
    let rng = match rng {
        Some(r) if p > 0.0 => r,
        _ => return None,
    };
    let scale = sf::<F>(1.0 / (1.0 - p));
    let mut mask = Array3::zeros(x.dim());
    for elt in mask.iter_mut() {
        *elt = if rng.next_f64() < p { F::zero() } else { scale };
    }
    *x *= &mask;
    Some(mask)
}

pub(crate) fn dropout_bwd<F: Scalar>(dy: &mut Array3<F>, mask: &Option<Array3<F>>) {
    if let Some(m) = mask {
        *dy *= m;
    }
}

// ---------------------------------------------------------------- embedding

/// Token + learned absolute position embedding: `x[b,l] = table[ids[b,l]] + pos[l]`.
pub(crate) fn embed<F: Scalar>(
    ids: &Array2<u32>,
    table: ArrayView2<F>,
    pos: ArrayView2<F>,
) -> Array3<F> {
    let (b, l) = ids.dim();
    let d = table.dim().1;
    assert!(l <= pos.dim().0, "sequence length {l} exceeds position table");
    let mut x = Array3::zeros((b, l, d));
    for bi in 0..b {
        for li in 0..l {
            let id = ids[[bi, li]] as usize;
            assert!(id < table.dim().0, "token id {id} out of vocabulary");
            let mut row = x.slice_mut(s![bi, li, ..]);
            for j in 0..d {
                row[j] = table[[id, j]] + pos[[li, j]];
            }
        }
    }
    x
}

/// Scatter-add backward for [`embed`]; returns full-size table gradients.
pub(crate) fn embed_bwd<F: Scalar>(
    ids: &Array2<u32>,
    dx: &Array3<F>,
    vocab: usize,
    max_len: usize,
) -> (Array2<F>, Array2<F>) {
    let (b, l, d) = dx.dim();
    let mut d_table = Array2::zeros((vocab, d));
    let mut d_pos = Array2::zeros((max_len, d));
    for bi in 0..b {
        for li in 0..l {
            let id = ids[[bi, li]] as usize;
            let g = dx.slice(s![bi, li, ..]);
            let mut trow = d_table.row_mut(id);
            trow += &g;
            let mut prow = d_pos.row_mut(li);
            prow += &g;
        }
    }
    (d_table, d_pos)
}
