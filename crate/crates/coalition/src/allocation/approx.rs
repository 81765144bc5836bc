//! Constant-time allocation approximations: leave-one-out marginal
//! contributions and a stratified expected value built on averaged
//! partner agents. Both rescale their raw scores so the size-weighted sum
//! reproduces the community total exactly.

use rayon::prelude::*;

use super::{AllocationError, ClassStructure, CountsCostFn, ProfileCostFn};

/// Rescales raw per-class scores so that the size-weighted sum equals the
/// community total. A zero normalizer is only acceptable when the total is
/// itself zero; otherwise the scores carry no signal to redistribute.
pub(crate) fn normalize_to_total(
    raw: &[f64],
    sizes: &[usize],
    total: f64,
) -> Result<Vec<f64>, AllocationError> {
    let weighted: f64 = raw.iter().zip(sizes).map(|(v, &n)| n as f64 * v).sum();
    if weighted == 0.0 {
        return if total == 0.0 {
            Ok(vec![0.0; raw.len()])
        } else {
            Err(AllocationError::DegenerateNormalizer)
        };
    }
    Ok(raw.iter().map(|v| total * v / weighted).collect())
}

/// Leave-one-out allocation: each class is scored by the cost its last
/// member adds on top of everyone else, and the scores are rescaled to the
/// community total. Needs `K + 1` coalition evaluations, or none when
/// backed by a precomputed table.
pub fn marginal_contribution_alloc(
    cost: &impl CountsCostFn,
    classes: &ClassStructure,
) -> Result<Vec<f64>, AllocationError> {
    let sizes = classes.sizes();
    let grand = cost.counts_cost(sizes);
    let raw: Vec<f64> = (0..classes.k())
        .map(|k| {
            let mut reduced = sizes.to_vec();
            reduced[k] -= 1;
            grand - cost.counts_cost(&reduced)
        })
        .collect();
    normalize_to_total(&raw, sizes, grand)
}

/// Stratified expected-value allocation. A class is scored by inserting one
/// of its members into coalitions of `j = 0..N-1` fictitious partners, each
/// carrying the community-average profile of everyone but that member, and
/// averaging the marginal costs over the strata. Scores are rescaled to the
/// community total. Needs `K (2N - 1) + 1` cost evaluations.
pub fn sev_alloc(
    cost: &impl ProfileCostFn,
    classes: &ClassStructure,
) -> Result<Vec<f64>, AllocationError> {
    let sizes = classes.sizes();
    let n = classes.n_total();
    let full = classes.aggregate_by_counts(sizes);
    let grand = cost.profile_cost(&full, n);
    if n == 1 {
        return Ok(vec![grand]);
    }

    let raw: Vec<f64> = classes
        .profiles()
        .par_iter()
        .map(|d| {
            // Average profile of the other N - 1 agents.
            let partner: Vec<f64> = full
                .iter()
                .zip(d)
                .map(|(f, v)| (f - v) / (n - 1) as f64)
                .collect();
            let mut acc = 0.0;
            for j in 0..n {
                let jf = j as f64;
                let with: Vec<f64> =
                    partner.iter().zip(d).map(|(p, v)| jf * p + v).collect();
                acc += cost.profile_cost(&with, j + 1);
                if j > 0 {
                    let without: Vec<f64> = partner.iter().map(|p| jf * p).collect();
                    acc -= cost.profile_cost(&without, j);
                }
            }
            acc / n as f64
        })
        .collect();
    normalize_to_total(&raw, sizes, grand)
}
