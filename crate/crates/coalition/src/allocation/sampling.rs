//! Adaptive stratified sampling of per-class cost shares.
//!
//! Each class estimates the expected marginal contribution of one of its
//! members per coalition-size stratum, steering later samples toward
//! strata whose contributions vary the most. Every class draws from its
//! own counter-based RNG stream, so results are byte-identical across
//! runs and thread counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Hypergeometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::approx::normalize_to_total;
use super::{AllocationError, ClassStructure, CountsCostFn};

/// Spread estimate assigned to strata before they have been visited twice;
/// large, so unexplored strata stay attractive.
const SIGMA_INIT: f64 = 1.0e4;

/// Default steepness of the exploration schedule.
pub const DEFAULT_BETA: f64 = 0.075;

/// Default midpoint of the exploration schedule, as a fraction of the
/// sample budget.
pub const DEFAULT_GAMMA: f64 = 0.2;

/// Tuning knobs for [`adaptive_sampling_alloc`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Sample budget for each class's estimator (must cover at least one
    /// visit per stratum).
    pub samples_per_agent: usize,
    /// Base RNG seed; class `k` draws from substream `k + 1` of this seed.
    pub seed: u64,
    /// Steepness of the exploration schedule.
    pub beta: f64,
    /// Midpoint of the exploration schedule, as a fraction of the budget.
    pub gamma: f64,
}

impl SamplerConfig {
    pub fn new(samples_per_agent: usize, seed: u64) -> Self {
        Self {
            samples_per_agent,
            seed,
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
        }
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self::new(1000, 0)
    }
}

/// Where the sampler spent its budget: per class, how often each
/// coalition-size stratum was visited and the mean marginal contribution
/// it settled on.
#[derive(Debug, Clone)]
pub struct SamplerDiagnostics {
    /// `stratum_visits[k][j]`: samples taken for class `k` at stratum `j`.
    pub stratum_visits: Vec<Vec<u64>>,
    /// `stratum_means[k][j]`: final mean marginal contribution.
    pub stratum_means: Vec<Vec<f64>>,
}

/// Exploration weight for the `m`-th of `m_total` samples: close to 1
/// early, so strata are drawn near-uniformly, then dropping toward a small
/// floor so late samples concentrate on high-spread strata.
pub fn epsilon_schedule(m: usize, m_total: usize, beta: f64, gamma: f64) -> f64 {
    let m = m as f64;
    let m_total = m_total as f64;
    1.0 + 1.0 / (1.0 + (gamma / beta).exp())
        - 1.0 / (1.0 + (-(m - gamma * m_total) / (beta * m_total)).exp())
}

/// Selection probabilities over strata for one draw: a uniform exploration
/// component blended with the normalized spread estimates, restricted to
/// the active strata and renormalized. Falls back to uniform over the
/// active set when every spread estimate is zero. The result always sums
/// to 1.
pub fn stratum_probabilities(sigmas: &[f64], active: &[bool], epsilon: f64) -> Vec<f64> {
    debug_assert_eq!(sigmas.len(), active.len());
    let n = sigmas.len() as f64;
    // Inactive strata always carry zero spread, so the sum needs no mask.
    let sigma_sum: f64 = sigmas.iter().sum();
    let mut weights: Vec<f64> = sigmas
        .iter()
        .zip(active)
        .map(|(&sigma, &live)| {
            if !live {
                return 0.0;
            }
            let spread = if sigma_sum > 0.0 { sigma / sigma_sum } else { 0.0 };
            epsilon / n + (1.0 - epsilon) * spread
        })
        .collect();
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0, "at least one stratum must be active");
    for w in weights.iter_mut() {
        *w /= total;
    }
    weights
}

/// Per-stratum running statistics of sampled marginal contributions.
struct StratumState {
    visits: Vec<u64>,
    means: Vec<f64>,
    m2: Vec<f64>,
    sigmas: Vec<f64>,
}

impl StratumState {
    fn new(n_strata: usize) -> Self {
        Self {
            visits: vec![0; n_strata],
            means: vec![0.0; n_strata],
            m2: vec![0.0; n_strata],
            sigmas: vec![SIGMA_INIT; n_strata],
        }
    }

    /// Streaming mean/variance update; the spread estimate replaces its
    /// optimistic initial value once a stratum has two samples.
    fn observe(&mut self, j: usize, mc: f64) {
        self.visits[j] += 1;
        let h = self.visits[j] as f64;
        let delta = mc - self.means[j];
        self.means[j] += delta / h;
        self.m2[j] += delta * (mc - self.means[j]);
        if self.visits[j] > 1 {
            self.sigmas[j] = (self.m2[j] / (h - 1.0)).sqrt();
        }
    }
}

/// Per-class cost shares estimated by adaptive stratified sampling,
/// rescaled so the size-weighted sum matches the community total.
///
/// Per class, one member's marginal contribution is sampled over partner
/// coalitions drawn uniformly within a size stratum; the boundary strata
/// (no partners, all partners) admit one composition each, so they are
/// sampled exactly once and then excluded from the draw. Returns the
/// shares together with per-stratum visit counts and means.
pub fn adaptive_sampling_alloc(
    cost: &impl CountsCostFn,
    classes: &ClassStructure,
    config: &SamplerConfig,
) -> Result<(Vec<f64>, SamplerDiagnostics), AllocationError> {
    let sizes = classes.sizes();
    let n = classes.n_total();
    let grand = cost.counts_cost(sizes);

    if n == 1 {
        let diagnostics = SamplerDiagnostics {
            stratum_visits: vec![vec![1]],
            stratum_means: vec![vec![grand]],
        };
        return Ok((vec![grand], diagnostics));
    }
    if config.samples_per_agent < n {
        return Err(AllocationError::InsufficientSamples {
            m: config.samples_per_agent,
            n,
        });
    }

    let per_class: Vec<(f64, Vec<u64>, Vec<f64>)> = (0..classes.k())
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(1 + k as u64);
            sample_class(cost, classes, config, k, &mut rng)
        })
        .collect();

    let raw: Vec<f64> = per_class.iter().map(|(v, _, _)| *v).collect();
    let values = normalize_to_total(&raw, sizes, grand)?;
    let diagnostics = SamplerDiagnostics {
        stratum_visits: per_class.iter().map(|(_, v, _)| v.clone()).collect(),
        stratum_means: per_class.into_iter().map(|(_, _, m)| m).collect(),
    };
    Ok((values, diagnostics))
}

/// Runs the full sample budget for one class and returns its raw score
/// (mean of the per-stratum means), visit counts, and stratum means.
fn sample_class(
    cost: &impl CountsCostFn,
    classes: &ClassStructure,
    config: &SamplerConfig,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, Vec<u64>, Vec<f64>) {
    let n = classes.n_total();
    // Partner population: everyone except the member under study.
    let mut others = classes.sizes().to_vec();
    others[k] -= 1;

    let mut state = StratumState::new(n);
    let mut active = vec![true; n];

    // Boundary strata admit a single partner composition each: sample them
    // once, record a zero spread, and keep them out of later draws.
    let empty = vec![0usize; classes.k()];
    state.observe(0, marginal(cost, &empty, k));
    state.observe(n - 1, marginal(cost, &others, k));
    for j in [0, n - 1] {
        state.sigmas[j] = 0.0;
        active[j] = false;
    }

    if n > 2 {
        // Samples 1 and 2 went to the boundaries; the rest adapt.
        for m in 3..=config.samples_per_agent {
            let eps = epsilon_schedule(m, config.samples_per_agent, config.beta, config.gamma);
            let pi = stratum_probabilities(&state.sigmas, &active, eps);
            let j = draw_index(&pi, rng);
            let partners = draw_composition(&others, j, rng);
            state.observe(j, marginal(cost, &partners, k));
        }
    }

    let score = state.means.iter().sum::<f64>() / n as f64;
    (score, state.visits, state.means)
}

/// Marginal cost of adding one member of class `k` to a partner coalition.
fn marginal(cost: &impl CountsCostFn, partners: &[usize], k: usize) -> f64 {
    let mut with = partners.to_vec();
    with[k] += 1;
    cost.counts_cost(&with) - cost.counts_cost(partners)
}

/// Inverse-CDF draw from a probability vector.
fn draw_index(pi: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (j, &p) in pi.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // Rounding can leave the cumulative sum a hair below 1.
    pi.iter()
        .rposition(|&p| p > 0.0)
        .expect("probabilities sum to 1")
}

/// Uniform partner composition of `j` agents drawn without replacement
/// from the per-class partner population, one class at a time.
fn draw_composition(others: &[usize], j: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut counts = vec![0usize; others.len()];
    let mut remaining_pop: u64 = others.iter().map(|&s| s as u64).sum();
    let mut remaining_draw = j as u64;
    for (q, &size) in others.iter().enumerate() {
        if remaining_draw == 0 {
            break;
        }
        if q == others.len() - 1 {
            counts[q] = remaining_draw as usize;
            break;
        }
        let dist = Hypergeometric::new(remaining_pop, size as u64, remaining_draw)
            .expect("stratum size never exceeds the partner population");
        let drawn = dist.sample(rng);
        counts[q] = drawn as usize;
        remaining_pop -= size as u64;
        remaining_draw -= drawn;
    }
    counts
}
