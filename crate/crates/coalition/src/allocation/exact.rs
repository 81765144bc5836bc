//! Exact Shapley values: per-class over the cost table, and per-agent by
//! subset enumeration for small communities.

use rayon::prelude::*;

use super::{
    for_each_count_vector, multivariate_hypergeometric_pmf, AllocationError, ClassStructure,
    CoalitionCostTable,
};
use crate::timeseries::DemandMatrix;

/// Exact per-class Shapley value from a precomputed coalition cost table.
///
/// For every class except the largest, the expected marginal contribution
/// of one member is accumulated over all count vectors of the remaining
/// agents, weighted by the probability of drawing that composition
/// uniformly without replacement (the class's own size reduced by one since
/// the member itself is excluded). The largest class is recovered through
/// the efficiency identity, so the per-class values always redistribute the
/// grand-coalition cost exactly.
///
/// Returns the cost share per agent of each class, in input class order.
/// No cost evaluations happen here beyond the table itself.
pub fn exact_shapley_kclass(
    table: &CoalitionCostTable,
    classes: &ClassStructure,
) -> Result<Vec<f64>, AllocationError> {
    table.matches(classes)?;
    let sizes = classes.sizes();
    let k_total = classes.k();
    let n_total = classes.n_total();
    let grand = table.grand_cost();

    if k_total == 1 {
        return Ok(vec![grand / n_total as f64]);
    }

    let eff = classes.largest_class();
    let direct: Vec<Option<f64>> = (0..k_total)
        .into_par_iter()
        .map(|k| {
            if k == eff {
                return Ok(None);
            }
            // Population seen by one member of class k: every other agent.
            let mut reduced = sizes.to_vec();
            reduced[k] -= 1;
            let mut bounds = sizes.to_vec();
            bounds[k] -= 1;

            let mut acc = 0.0;
            let mut with_member = vec![0usize; k_total];
            let mut error = None;
            for_each_count_vector(&bounds, |counts| {
                if error.is_some() {
                    return;
                }
                let stratum: usize = counts.iter().sum();
                match multivariate_hypergeometric_pmf(counts, &reduced, n_total - 1, stratum) {
                    Ok(weight) => {
                        with_member.copy_from_slice(counts);
                        with_member[k] += 1;
                        acc += weight * (table.cost(&with_member) - table.cost(counts));
                    }
                    Err(e) => error = Some(e),
                }
            });
            if let Some(e) = error {
                return Err(e);
            }
            Ok(Some(acc / n_total as f64))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut values = vec![0.0; k_total];
    let mut allocated = 0.0;
    for (k, v) in direct.iter().enumerate() {
        if let Some(v) = v {
            values[k] = *v;
            allocated += sizes[k] as f64 * v;
        }
    }
    values[eff] = (grand - allocated) / sizes[eff] as f64;
    Ok(values)
}

/// Default cap on the community size accepted by [`exact_shapley_naive`];
/// the subset enumeration costs `2^N` coalition evaluations.
pub const DEFAULT_NAIVE_AGENT_LIMIT: usize = 12;

/// Exact per-agent Shapley value by direct subset enumeration.
///
/// Every subset cost is evaluated once (memoized by bitmask) and each
/// agent's value is the factorial-weighted sum of its marginal
/// contributions over all subsets of the others. Agents with bit-identical
/// demand rows share one computation, so their values are equal down to
/// the last bit.
pub fn exact_shapley_naive(
    demands: &DemandMatrix,
    cost: &(impl Fn(&[usize]) -> f64 + Sync),
    max_agents: usize,
) -> Result<Vec<f64>, AllocationError> {
    let n = demands.n_agents();
    if n == 0 {
        return Err(AllocationError::EmptyStructure);
    }
    let limit = max_agents.min(u32::BITS as usize - 1);
    if n > limit {
        return Err(AllocationError::TooManyAgents { n, limit });
    }

    // Memoize every subset cost, indexed by member bitmask.
    let subset_costs: Vec<f64> = (0u32..1 << n)
        .into_par_iter()
        .map(|mask| {
            let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            cost(&members)
        })
        .collect();

    // Identical demand rows get identical values by sharing the
    // representative's computation.
    let representative: Vec<usize> = (0..n)
        .map(|i| {
            (0..i)
                .find(|&j| bit_equal(demands.row(j), demands.row(i)))
                .unwrap_or(i)
        })
        .collect();

    let weights = subset_weights(n);
    let rep_values: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            if representative[i] != i {
                return None;
            }
            let bit = 1u32 << i;
            let mut acc = 0.0;
            for mask in 0u32..1 << n {
                if mask & bit == 0 {
                    let s = mask.count_ones() as usize;
                    acc += weights[s]
                        * (subset_costs[(mask | bit) as usize] - subset_costs[mask as usize]);
                }
            }
            Some(acc)
        })
        .collect();

    Ok((0..n)
        .map(|i| rep_values[representative[i]].expect("representatives are computed"))
        .collect())
}

fn bit_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Shapley subset weights `|S|! (N - |S| - 1)! / N!` for `|S| = 0..N-1`.
fn subset_weights(n: usize) -> Vec<f64> {
    let fact: Vec<f64> = {
        let mut f = vec![1.0f64; n + 1];
        for i in 1..=n {
            f[i] = f[i - 1] * i as f64;
        }
        f
    };
    (0..n)
        .map(|s| fact[s] * fact[n - 1 - s] / fact[n])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::fixtures::{toy_classes, toy_counts_cost, TOY_GRAND, TOY_SHAPLEY};
    use crate::allocation::CountsCostFn;

    fn matrix(rows: &[&[f64]]) -> DemandMatrix {
        DemandMatrix::new(
            (0..rows.len()).map(|i| format!("a{i}")).collect(),
            rows.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn naive_matches_permutation_oracle_on_an_asymmetric_game() {
        // Independently enumerated over all 3! orderings.
        let demands = matrix(&[&[1.0], &[2.0], &[3.0]]);
        let cost = |members: &[usize]| -> f64 {
            let mut key: Vec<usize> = members.to_vec();
            key.sort_unstable();
            match key.as_slice() {
                [] => 0.0,
                [0] => 3.0,
                [1] => 1.0,
                [2] => 2.0,
                [0, 1] => 3.5,
                [0, 2] => 4.2,
                [1, 2] => 2.6,
                [0, 1, 2] => 4.9,
                _ => unreachable!(),
            }
        };
        let phi = exact_shapley_naive(&demands, &cost, DEFAULT_NAIVE_AGENT_LIMIT).unwrap();
        let expected = [2.55, 0.75, 1.6];
        for (p, e) in phi.iter().zip(expected) {
            assert!((p - e).abs() < 1e-12, "{phi:?}");
        }
        let total: f64 = phi.iter().sum();
        assert!((total - 4.9).abs() < 1e-12);
    }

    #[test]
    fn naive_gives_equal_shares_in_a_symmetric_game() {
        let demands = matrix(&[&[1.0], &[1.0], &[1.0]]);
        let cost = |members: &[usize]| -> f64 {
            match members.len() {
                0 => 0.0,
                1 => 1.0,
                2 => 1.5,
                _ => 2.0,
            }
        };
        let phi = exact_shapley_naive(&demands, &cost, DEFAULT_NAIVE_AGENT_LIMIT).unwrap();
        for p in &phi {
            assert!((p - 2.0 / 3.0).abs() < 1e-15);
            // identical rows share the exact same bits
            assert_eq!(p.to_bits(), phi[0].to_bits());
        }
    }

    #[test]
    fn naive_recovers_additive_games_exactly() {
        let demands = matrix(&[&[0.5], &[1.25], &[2.0], &[0.75]]);
        let rates = [0.9, 1.7, 0.4, 1.1];
        let cost =
            |members: &[usize]| -> f64 { members.iter().map(|&i| rates[i]).sum() };
        let phi = exact_shapley_naive(&demands, &cost, DEFAULT_NAIVE_AGENT_LIMIT).unwrap();
        for (p, r) in phi.iter().zip(rates) {
            assert!(((p - r) / r).abs() < 1e-12);
        }
    }

    #[test]
    fn naive_rejects_oversized_communities() {
        let demands = matrix(&[&[1.0f64] as &[f64]; 13]);
        let cost = |_: &[usize]| 0.0;
        assert!(matches!(
            exact_shapley_naive(&demands, &cost, 12),
            Err(AllocationError::TooManyAgents { n: 13, limit: 12 })
        ));
    }

    #[test]
    fn kclass_matches_the_independent_enumeration() {
        let classes = toy_classes();
        let table =
            CoalitionCostTable::from_counts_fn(classes.sizes(), &toy_counts_cost).unwrap();
        let phi = exact_shapley_kclass(&table, &classes).unwrap();
        for (p, e) in phi.iter().zip(TOY_SHAPLEY) {
            assert!(((p - e) / e).abs() < 1e-12, "{phi:?}");
        }
        // Efficiency: shares weighted by class sizes return the grand cost.
        let total = 3.0 * phi[0] + 2.0 * phi[1];
        assert!(((total - TOY_GRAND) / TOY_GRAND).abs() < 1e-14);
    }

    #[test]
    fn kclass_matches_naive_on_the_expanded_community() {
        let classes = toy_classes();
        let table =
            CoalitionCostTable::from_counts_fn(classes.sizes(), &toy_counts_cost).unwrap();
        let kclass = exact_shapley_kclass(&table, &classes).unwrap();

        // Expand to five explicit agents: 3 of class 0, 2 of class 1.
        let demands = matrix(&[
            &[1.0, 2.0],
            &[1.0, 2.0],
            &[1.0, 2.0],
            &[4.0, 1.0],
            &[4.0, 1.0],
        ]);
        let member_cost = |members: &[usize]| -> f64 {
            let n0 = members.iter().filter(|&&i| i < 3).count();
            let counts = [n0, members.len() - n0];
            toy_counts_cost.counts_cost(&counts)
        };
        let naive =
            exact_shapley_naive(&demands, &member_cost, DEFAULT_NAIVE_AGENT_LIMIT).unwrap();
        assert!(((naive[0] - kclass[0]) / kclass[0]).abs() < 1e-12);
        assert!(((naive[3] - kclass[1]) / kclass[1]).abs() < 1e-12);
    }

    #[test]
    fn kclass_single_class_is_an_equal_split() {
        let classes = ClassStructure::new(vec![vec![1.0, 1.0]], vec![4]).unwrap();
        let cost = |counts: &[usize]| counts[0] as f64 * 2.5;
        let table = CoalitionCostTable::from_counts_fn(classes.sizes(), &cost).unwrap();
        let phi = exact_shapley_kclass(&table, &classes).unwrap();
        assert_eq!(phi, vec![2.5]);
    }

    #[test]
    fn kclass_rejects_mismatched_tables() {
        let classes = toy_classes();
        let table = CoalitionCostTable::from_counts_fn(&[2, 2], &toy_counts_cost).unwrap();
        assert!(matches!(
            exact_shapley_kclass(&table, &classes),
            Err(AllocationError::TableShapeMismatch { .. })
        ));
    }
}
