//! AdamW with decoupled weight decay, global-norm gradient clipping, and a
//! linear-warmup / inverse-sqrt-decay learning-rate schedule.

use super::{sf, Scalar, Tensors};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay, applied to rank-2 tensors only (projection matrices
    /// and embedding tables); layer-norm gains are exempt.
    pub weight_decay: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// Learning rate at 1-based step `t`: linear ramp to `peak` over `warmup`
/// steps, then `peak · √(warmup / t)`.
pub fn scheduled_lr(peak: f64, warmup: usize, t: u64) -> f64 {
    assert!(t >= 1, "schedule steps are 1-based");
    let w = warmup.max(1) as f64;
    let t = t as f64;
    if t <= w {
        peak * t / w
    } else {
        peak * (w / t).sqrt()
    }
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm. The norm is reduced in f64 so the clip
/// decision is identical across scalar types.
pub fn clip_grad_norm<F: Scalar>(grads: &mut Tensors<F>, max_norm: f64) -> f64 {
    let mut sq = 0.0f64;
    for (_, g) in grads.iter() {
        for &x in g.iter() {
            let x = x.to_f64().unwrap();
            sq += x * x;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = sf::<F>(max_norm / norm);
        for (_, g) in grads.iter_mut() {
            g.mapv_inplace(|x| x * scale);
        }
    }
    norm
}

/// One AdamW update. `t` is the 1-based global step used for bias
/// correction; `m`/`v` are the first/second moment estimates, maintained in
/// the same named order as the parameters.
pub fn adamw_step<F: Scalar>(
    params: &mut Tensors<F>,
    grads: &Tensors<F>,
    m: &mut Tensors<F>,
    v: &mut Tensors<F>,
    t: u64,
    lr: f64,
    oc: &OptimConfig,
) {
    assert!(t >= 1, "bias correction requires 1-based steps");
    let b1 = sf::<F>(oc.beta1);
    let b2 = sf::<F>(oc.beta2);
    let one = F::one();
    let corr1 = sf::<F>(1.0 / (1.0 - oc.beta1.powi(t as i32)));
    let corr2 = sf::<F>(1.0 / (1.0 - oc.beta2.powi(t as i32)));
    let lr_f = sf::<F>(lr);
    let eps = sf::<F>(oc.eps);
    let decay = sf::<F>(lr * oc.weight_decay);

    for (((pn, p), (gn, g)), ((mn, mm), (_, vv))) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(m.iter_mut().zip(v.iter_mut()))
    {
        debug_assert!(pn == gn && pn == mn, "tensor order mismatch");
        let apply_decay = p.ndim() == 2;
        ndarray::Zip::from(p)
            .and(g)
            .and(mm)
            .and(vv)
            .for_each(|p, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let mhat = *m * corr1;
                let vhat = *v * corr2;
                let mut upd = lr_f * mhat / (vhat.sqrt() + eps);
                if apply_decay {
                    upd = upd + decay * *p;
                }
                *p = *p - upd;
            });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};

    fn one_param(value: f64) -> Tensors<f64> {
        let mut t = Tensors::new();
        t.insert("w", ArrayD::from_elem(IxDyn(&[1, 1]), value));
        t
    }

    #[test]
    fn adamw_single_step_matches_hand_computation() {
        // p=1, g=0.5, lr=0.1, β=(0.9,0.99), wd=0.1:
        //   m=0.05, v=0.0025, m̂=0.5, v̂=0.25,
        //   upd = 0.1·0.5/(0.5+1e-8) + 0.1·0.1·1 → p ≈ 0.890000001
        let mut p = one_param(1.0);
        let g = one_param(0.5);
        let mut m = p.zeros_like();
        let mut v = p.zeros_like();
        let oc = OptimConfig { beta1: 0.9, beta2: 0.99, eps: 1e-8, weight_decay: 0.1 };
        adamw_step(&mut p, &g, &mut m, &mut v, 1, 0.1, &oc);
        let expect = 1.0 - 0.1 * (0.5 / (0.25f64.sqrt() + 1e-8)) - 0.1 * 0.1 * 1.0;
        assert!((p.get("w")[[0, 0]] - expect).abs() < 1e-12);
        assert!((m.get("w")[[0, 0]] - 0.05).abs() < 1e-15);
        assert!((v.get("w")[[0, 0]] - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn gains_are_not_decayed() {
        // 1-D tensor with zero gradient: AdamW must leave it untouched.
        let mut p = Tensors::new();
        p.insert("ln.g", ArrayD::from_elem(IxDyn(&[4]), 1.0f64));
        let g = p.zeros_like();
        let mut m = p.zeros_like();
        let mut v = p.zeros_like();
        adamw_step(&mut p, &g, &mut m, &mut v, 1, 0.1, &OptimConfig::default());
        assert!(p.get("ln.g").iter().all(|&x| x == 1.0));
    }

    #[test]
    fn zero_lr_is_a_parameter_noop() {
        let mut p = one_param(0.7);
        let g = one_param(0.3);
        let mut m = p.zeros_like();
        let mut v = p.zeros_like();
        // With lr = 0 both the Adam update and the decay vanish exactly.
        adamw_step(&mut p, &g, &mut m, &mut v, 1, 0.0, &OptimConfig::default());
        assert_eq!(p.get("w")[[0, 0]], 0.7);
        // Moments still advance.
        assert!(m.get("w")[[0, 0]] != 0.0);
    }

    #[test]
    fn schedule_ramps_then_decays_inverse_sqrt() {
        let peak = 1e-3;
        assert!((scheduled_lr(peak, 100, 50) - peak * 0.5).abs() < 1e-18);
        assert!((scheduled_lr(peak, 100, 100) - peak).abs() < 1e-18);
        // At 4× warmup the inverse-sqrt decay halves the rate.
        assert!((scheduled_lr(peak, 100, 400) - peak * 0.5).abs() < 1e-18);
        assert!(scheduled_lr(peak, 100, 101) < peak);
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        let mut g = Tensors::new();
        g.insert("a", ArrayD::from_elem(IxDyn(&[2, 2]), 3.0f64));
        // norm = √(4·9) = 6 → scale by 1/6.
        let norm = clip_grad_norm(&mut g, 1.0);
        assert!((norm - 6.0).abs() < 1e-12);
        let after: f64 = g.get("a").iter().map(|&x| x * x).sum::<f64>().sqrt();
        assert!((after - 1.0).abs() < 1e-12);
        // Below the threshold nothing changes.
        let norm2 = clip_grad_norm(&mut g, 10.0);
        assert!((norm2 - 1.0).abs() < 1e-12);
        assert!((g.get("a")[[0, 0]] - 0.5).abs() < 1e-12);
    }
}
