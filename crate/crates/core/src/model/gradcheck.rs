//! Finite-difference verification of the analytic backward pass.
//!
//! Runs the production forward/backward code instantiated at `f64` and
//! compares analytic gradients against central differences at randomly
//! sampled coordinates of every parameter tensor. Central differences with
//! h = 1e-5 on an O(1) loss leave ~1e-10 of numerical noise, far below the
//! 1e-3 acceptance threshold, so any systematic backward bug stands out.

use super::net::{grad, loss, Batch};
use super::{ModelConfig, Tensors};
use crate::rng::{mix, CounterRng};

#[derive(Debug, Clone)]
pub struct GroupReport {
    pub name: String,
    pub n_checked: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub n_checked: usize,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Relative error with an absolute floor: coordinates where both the
/// analytic and numeric gradient are ~0 compare their difference against
/// the floor instead of dividing by noise.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Check `coords_per_group` randomly sampled coordinates of every parameter
/// tensor against central differences. `params` are initialized from `seed`
/// inside, in `f64`.
pub fn grad_check(
    cfg: &ModelConfig,
    batch: &Batch,
    coords_per_group: usize,
    seed: u64,
) -> GradCheckReport {
    let mut params: Tensors<f64> = super::init_params(cfg, seed);
    let (_, _, analytic) = grad(&params, cfg, batch, None);
    let names: Vec<String> = params.names().map(String::from).collect();

    let h = 1e-5;
    let mut groups = Vec::with_capacity(names.len());
    let mut overall_max = 0.0f64;
    let mut total = 0usize;
    for (gi, name) in names.iter().enumerate() {
        let numel = params.get(name).len();
        let n = coords_per_group.min(numel);
        // Sample distinct coordinates: shuffle the index range when small,
        // otherwise draw with replacement (collisions only re-check).
        let mut rng = CounterRng::new(mix(&[seed, 0x6c4d, gi as u64]));
        let coords: Vec<usize> = if numel <= 4 * coords_per_group {
            let mut idx: Vec<usize> = (0..numel).collect();
            rng.shuffle(&mut idx);
            idx.truncate(n);
            idx
        } else {
            (0..n).map(|_| rng.below(numel as u64) as usize).collect()
        };

        let mut max_err = 0.0f64;
        for &c in &coords {
            let orig = params.get(name).as_slice().unwrap()[c];
            let a = analytic.get(name).as_slice().unwrap()[c];
            set_flat(&mut params, name, c, orig + h);
            let (lp, _) = loss(&params, cfg, batch);
            set_flat(&mut params, name, c, orig - h);
            let (lm, _) = loss(&params, cfg, batch);
            set_flat(&mut params, name, c, orig);
            let numeric = (lp - lm) / (2.0 * h);
            let e = rel_err(a, numeric);
            if e > max_err {
                max_err = e;
            }
        }
        total += coords.len();
        if max_err > overall_max {
            overall_max = max_err;
        }
        groups.push(GroupReport { name: name.clone(), n_checked: coords.len(), max_rel_err: max_err });
    }
    GradCheckReport { groups, n_checked: total, max_rel_err: overall_max }
}

fn set_flat(params: &mut Tensors<f64>, name: &str, coord: usize, value: f64) {
    params.get_mut(name).as_slice_mut().unwrap()[coord] = value;
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    /// Smallest config that still exercises every code path: multi-head
    /// attention, both stacks, padding in the source, padding in the target.
    pub(crate) fn check_setup() -> (ModelConfig, Batch) {
        let cfg = ModelConfig {
            src_vocab: 10,
            tgt_vocab: 8,
            d_model: 8,
            n_heads: 2,
            n_enc_blocks: 1,
            n_dec_blocks: 1,
            d_ff: 16,
            dropout: 0.0,
            max_src_len: 5,
            max_tgt_len: 4,
        };
        let batch = Batch {
            src: arr2(&[[1, 4, 7, 2, 0], [1, 9, 2, 0, 0]]),
            src_mask: arr2(&[
                [true, true, true, true, false],
                [true, true, true, false, false],
            ]),
            tgt_in: arr2(&[[1, 3, 5], [1, 4, 2]]),
            tgt_out: arr2(&[[3, 5, 2], [4, 2, 0]]),
        };
        (cfg, batch)
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let (cfg, batch) = check_setup();
        let report = grad_check(&cfg, &batch, 24, 42);
        assert!(
            report.passed(1e-3),
            "max rel err {} in {:?}",
            report.max_rel_err,
            report
                .groups
                .iter()
                .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
                .map(|g| &g.name)
        );
        assert!(report.n_checked > 300, "checked only {}", report.n_checked);
    }
}
