//! Multivariate hypergeometric stratum weights.
//!
//! Drawing `n` agents uniformly without replacement from a community with
//! `class_sizes` members per class, the probability of seeing exactly
//! `counts[k]` members of class `k` is
//! `prod_k C(N_k, n_k) / C(N, n)`. Binomials are evaluated in log space so
//! community sizes in the hundreds stay far from overflow.

use std::sync::OnceLock;

use super::AllocationError;

/// Largest factorial argument the cached table supports; community sizes
/// are far below this.
const MAX_FACTORIAL_ARG: usize = 4096;

fn ln_factorials() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = Vec::with_capacity(MAX_FACTORIAL_ARG + 1);
        table.push(0.0); // ln 0! = 0
        let mut acc = 0.0;
        for n in 1..=MAX_FACTORIAL_ARG {
            acc += (n as f64).ln();
            table.push(acc);
        }
        table
    })
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n && n <= MAX_FACTORIAL_ARG);
    let table = ln_factorials();
    table[n] - table[k] - table[n - k]
}

/// Probability of drawing exactly `counts[k]` members of each class when
/// sampling `n_draw` agents uniformly without replacement from a population
/// of `n_total` agents split into classes of `class_sizes`.
///
/// Count vectors with `counts[k] > class_sizes[k]` have probability zero.
pub fn multivariate_hypergeometric_pmf(
    counts: &[usize],
    class_sizes: &[usize],
    n_total: usize,
    n_draw: usize,
) -> Result<f64, AllocationError> {
    if counts.len() != class_sizes.len() {
        return Err(AllocationError::InvalidCounts(format!(
            "count vector has {} classes, sizes have {}",
            counts.len(),
            class_sizes.len()
        )));
    }
    let size_sum: usize = class_sizes.iter().sum();
    if size_sum != n_total {
        return Err(AllocationError::InvalidCounts(format!(
            "class sizes sum to {size_sum}, expected population {n_total}"
        )));
    }
    if n_draw > n_total {
        return Err(AllocationError::InvalidCounts(format!(
            "cannot draw {n_draw} agents from {n_total}"
        )));
    }
    let count_sum: usize = counts.iter().sum();
    if count_sum != n_draw {
        return Err(AllocationError::InvalidCounts(format!(
            "counts sum to {count_sum}, expected draw size {n_draw}"
        )));
    }
    if n_total > MAX_FACTORIAL_ARG {
        return Err(AllocationError::InvalidCounts(format!(
            "population {n_total} exceeds the supported maximum {MAX_FACTORIAL_ARG}"
        )));
    }
    if counts
        .iter()
        .zip(class_sizes)
        .any(|(&n_k, &size_k)| n_k > size_k)
    {
        return Ok(0.0);
    }
    let mut ln_p = -ln_binomial(n_total, n_draw);
    for (&n_k, &size_k) in counts.iter().zip(class_sizes) {
        ln_p += ln_binomial(size_k, n_k);
    }
    Ok(ln_p.exp())
}
