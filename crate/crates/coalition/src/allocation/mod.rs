//! Cost allocation methods for class-structured communities.
//!
//! Agents are grouped into classes that share one demand profile, so a
//! coalition is fully described by the vector of per-class member counts.
//! [`CoalitionCostTable`] prices every such count vector once; the exact
//! per-class Shapley value, the marginal-contribution and stratified
//! expected-value approximations, and the adaptive stratified sampler all
//! run against that table or against a live [`CostContext`].

mod approx;
mod exact;
mod hypergeom;
mod metrics;
mod sampling;

pub use approx::{marginal_contribution_alloc, sev_alloc};
pub use exact::{exact_shapley_kclass, exact_shapley_naive, DEFAULT_NAIVE_AGENT_LIMIT};
pub use hypergeom::multivariate_hypergeometric_pmf;
pub use metrics::{average_relative_difference, relative_difference};
pub use sampling::{
    adaptive_sampling_alloc, epsilon_schedule, stratum_probabilities, SamplerConfig,
    SamplerDiagnostics,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostContext, CostError};
use crate::timeseries::DemandMatrix;

#[derive(Debug, Error)]
pub enum AllocationError {
    #[error("class structure needs at least one class with size >= 1")]
    EmptyStructure,
    #[error("class profiles have differing lengths")]
    ProfileLengthMismatch,
    #[error("{n} agents exceed the exact enumeration limit of {limit}")]
    TooManyAgents { n: usize, limit: usize },
    #[error("invalid count arguments: {0}")]
    InvalidCounts(String),
    #[error("cost table shape {table:?} does not match class sizes {classes:?}")]
    TableShapeMismatch {
        table: Vec<usize>,
        classes: Vec<usize>,
    },
    #[error("method needs at least two agents, got {n}")]
    InsufficientAgents { n: usize },
    #[error("sampler budget {m} is below the stratum count {n}")]
    InsufficientSamples { m: usize, n: usize },
    #[error("allocations cannot be normalized: total weighted value is zero but the community cost is not")]
    DegenerateNormalizer,
    #[error("relative difference is undefined against a zero ground truth")]
    ZeroTruth,
    #[error("agent {agent} has label {label} but only {k} classes exist")]
    LabelOutOfRange {
        agent: usize,
        label: usize,
        k: usize,
    },
    #[error("class {class} has no members")]
    EmptyClass { class: usize },
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// Identifier of an allocation method, used in reports and CSV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "exact")]
    ExactKclass,
    #[serde(rename = "naive")]
    ExactNaive,
    #[serde(rename = "mc")]
    MarginalContribution,
    #[serde(rename = "sev")]
    Sev,
    #[serde(rename = "sampling")]
    AdaptiveSampling,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ExactKclass => "exact",
            Method::ExactNaive => "naive",
            Method::MarginalContribution => "mc",
            Method::Sev => "sev",
            Method::AdaptiveSampling => "sampling",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Method::ExactKclass),
            "naive" => Ok(Method::ExactNaive),
            "mc" => Ok(Method::MarginalContribution),
            "sev" => Ok(Method::Sev),
            "sampling" => Ok(Method::AdaptiveSampling),
            other => Err(format!(
                "unknown method '{other}' (expected exact, naive, mc, sev, or sampling)"
            )),
        }
    }
}

/// Outcome of one allocation: the annual cost share per class (GBP per
/// agent of that class), in the caller's class order.
#[derive(Debug, Clone)]
pub struct AllocationResult {
    pub method: Method,
    /// Cost per agent for each class (GBP/year), original class order.
    pub per_class_cost_gbp: Vec<f64>,
    /// Cost of the grand coalition (GBP/year).
    pub community_total_gbp: f64,
    /// RNG seed, for sampled methods.
    pub seed: Option<u64>,
    /// Sample budget per class, for sampled methods.
    pub samples_per_agent: Option<usize>,
}

impl AllocationResult {
    pub fn deterministic(method: Method, per_class: Vec<f64>, total: f64) -> Self {
        Self {
            method,
            per_class_cost_gbp: per_class,
            community_total_gbp: total,
            seed: None,
            samples_per_agent: None,
        }
    }
}

/// A community partitioned into classes of identical agents: one demand
/// profile and a head count per class.
#[derive(Debug, Clone)]
pub struct ClassStructure {
    names: Vec<String>,
    profiles: Vec<Vec<f64>>,
    sizes: Vec<usize>,
}

impl ClassStructure {
    /// Builds a structure from per-class profiles and sizes. Every class
    /// must have at least one member and all profiles the same length.
    pub fn new(profiles: Vec<Vec<f64>>, sizes: Vec<usize>) -> Result<Self, AllocationError> {
        let names = (0..profiles.len()).map(|k| format!("class{k}")).collect();
        Self::with_names(names, profiles, sizes)
    }

    pub fn with_names(
        names: Vec<String>,
        profiles: Vec<Vec<f64>>,
        sizes: Vec<usize>,
    ) -> Result<Self, AllocationError> {
        if profiles.is_empty() || profiles.len() != sizes.len() || names.len() != sizes.len() {
            return Err(AllocationError::EmptyStructure);
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(AllocationError::EmptyStructure);
        }
        let t = profiles[0].len();
        if profiles.iter().any(|p| p.len() != t) {
            return Err(AllocationError::ProfileLengthMismatch);
        }
        Ok(Self {
            names,
            profiles,
            sizes,
        })
    }

    /// One singleton class per agent: the representation used to run the
    /// class-based methods on fully heterogeneous communities.
    pub fn singletons(demands: &DemandMatrix) -> Result<Self, AllocationError> {
        Self::with_names(
            demands.agent_ids().to_vec(),
            demands.rows().to_vec(),
            vec![1; demands.n_agents()],
        )
    }

    /// Groups agents by label (class index per agent); each class profile
    /// is the mean of its members' rows.
    pub fn from_assignments(
        demands: &DemandMatrix,
        labels: &[usize],
        names: Vec<String>,
    ) -> Result<Self, AllocationError> {
        let k = names.len();
        assert_eq!(labels.len(), demands.n_agents(), "one label per agent");
        for (agent, &label) in labels.iter().enumerate() {
            if label >= k {
                return Err(AllocationError::LabelOutOfRange { agent, label, k });
            }
        }
        let t = demands.timesteps();
        let mut sums = vec![vec![0.0; t]; k];
        let mut sizes = vec![0usize; k];
        for (agent, &label) in labels.iter().enumerate() {
            sizes[label] += 1;
            for (acc, v) in sums[label].iter_mut().zip(demands.row(agent)) {
                *acc += v;
            }
        }
        if let Some(class) = sizes.iter().position(|&s| s == 0) {
            return Err(AllocationError::EmptyClass { class });
        }
        for (sum, &size) in sums.iter_mut().zip(&sizes) {
            for v in sum.iter_mut() {
                *v /= size as f64;
            }
        }
        Self::with_names(names, sums, sizes)
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    /// Total number of agents.
    pub fn n_total(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn profiles(&self) -> &[Vec<f64>] {
        &self.profiles
    }

    pub fn timesteps(&self) -> usize {
        self.profiles[0].len()
    }

    /// Aggregate demand of a coalition described by per-class counts.
    pub fn aggregate_by_counts(&self, counts: &[usize]) -> Vec<f64> {
        debug_assert_eq!(counts.len(), self.k());
        let mut out = vec![0.0; self.timesteps()];
        for (profile, &n) in self.profiles.iter().zip(counts) {
            if n == 0 {
                continue;
            }
            let weight = n as f64;
            for (acc, v) in out.iter_mut().zip(profile) {
                *acc += weight * v;
            }
        }
        out
    }

    /// Index of the largest class (first one on ties) — the class whose
    /// exact Shapley value is recovered through the efficiency identity.
    pub fn largest_class(&self) -> usize {
        let mut best = 0;
        for (k, &s) in self.sizes.iter().enumerate() {
            if s > self.sizes[best] {
                best = k;
            }
        }
        best
    }
}

/// A cost oracle over per-class count vectors.
pub trait CountsCostFn: Sync {
    fn counts_cost(&self, counts: &[usize]) -> f64;
}

/// A cost oracle over raw demand profiles (needed by methods that price
/// fictitious averaged agents rather than member subsets).
pub trait ProfileCostFn: Sync {
    fn profile_cost(&self, demand_kw: &[f64], coalition_size: usize) -> f64;
}

impl<F: Fn(&[usize]) -> f64 + Sync> CountsCostFn for F {
    fn counts_cost(&self, counts: &[usize]) -> f64 {
        self(counts)
    }
}

impl<F: Fn(&[f64], usize) -> f64 + Sync> ProfileCostFn for F {
    fn profile_cost(&self, demand_kw: &[f64], coalition_size: usize) -> f64 {
        self(demand_kw, coalition_size)
    }
}

impl ProfileCostFn for CostContext<'_> {
    fn profile_cost(&self, demand_kw: &[f64], coalition_size: usize) -> f64 {
        self.cost_of_profile(demand_kw, coalition_size)
            .expect("profile length was validated against the context")
            .total_gbp
    }
}

/// Live (untabulated) class game: every count-vector query aggregates the
/// class profiles and runs the full cost pipeline.
pub struct ClassGame<'a> {
    pub ctx: &'a CostContext<'a>,
    pub classes: &'a ClassStructure,
}

impl CountsCostFn for ClassGame<'_> {
    fn counts_cost(&self, counts: &[usize]) -> f64 {
        let aggregate = self.classes.aggregate_by_counts(counts);
        let size: usize = counts.iter().sum();
        self.ctx
            .cost_of_profile(&aggregate, size)
            .expect("profile length was validated against the context")
            .total_gbp
    }
}

/// Dense cost table over the Cartesian product of class counts
/// (`size_k + 1` entries per class). Entry `[n_1, ..., n_K]` is the total
/// annual cost of a coalition with those member counts.
#[derive(Debug, Clone)]
pub struct CoalitionCostTable {
    sizes: Vec<usize>,
    strides: Vec<usize>,
    costs: Vec<f64>,
}

impl CoalitionCostTable {
    /// Prices every count vector in parallel. The number of cost
    /// evaluations equals the table volume `prod_k (size_k + 1)`.
    pub fn build(ctx: &CostContext, classes: &ClassStructure) -> Result<Self, AllocationError> {
        let sizes = classes.sizes().to_vec();
        let (strides, volume) = strides_for(&sizes);
        let costs: Result<Vec<f64>, AllocationError> = (0..volume)
            .into_par_iter()
            .map(|flat| {
                let counts = decode(flat, &sizes, &strides);
                let aggregate = classes.aggregate_by_counts(&counts);
                let size: usize = counts.iter().sum();
                Ok(ctx.cost_of_profile(&aggregate, size)?.total_gbp)
            })
            .collect();
        Ok(Self {
            sizes,
            strides,
            costs: costs?,
        })
    }

    /// Table built directly from a counts oracle (used in tests and for
    /// analytic games).
    pub fn from_counts_fn(
        sizes: &[usize],
        cost: &impl CountsCostFn,
    ) -> Result<Self, AllocationError> {
        if sizes.is_empty() {
            return Err(AllocationError::EmptyStructure);
        }
        let sizes = sizes.to_vec();
        let (strides, volume) = strides_for(&sizes);
        let costs = (0..volume)
            .into_par_iter()
            .map(|flat| cost.counts_cost(&decode(flat, &sizes, &strides)))
            .collect();
        Ok(Self {
            sizes,
            strides,
            costs,
        })
    }

    pub fn class_sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of stored entries.
    pub fn volume(&self) -> usize {
        self.costs.len()
    }

    fn index(&self, counts: &[usize]) -> usize {
        debug_assert_eq!(counts.len(), self.sizes.len());
        let mut idx = 0;
        for (k, &n) in counts.iter().enumerate() {
            debug_assert!(n <= self.sizes[k], "count exceeds class size");
            idx += n * self.strides[k];
        }
        idx
    }

    /// Cost of the coalition with the given per-class counts.
    pub fn cost(&self, counts: &[usize]) -> f64 {
        self.costs[self.index(counts)]
    }

    /// Cost of the grand coalition.
    pub fn grand_cost(&self) -> f64 {
        self.cost(&self.sizes.clone())
    }

    pub fn matches(&self, classes: &ClassStructure) -> Result<(), AllocationError> {
        if self.sizes != classes.sizes() {
            return Err(AllocationError::TableShapeMismatch {
                table: self.sizes.clone(),
                classes: classes.sizes().to_vec(),
            });
        }
        Ok(())
    }
}

impl CountsCostFn for CoalitionCostTable {
    fn counts_cost(&self, counts: &[usize]) -> f64 {
        self.cost(counts)
    }
}

fn strides_for(sizes: &[usize]) -> (Vec<usize>, usize) {
    let mut strides = vec![0; sizes.len()];
    let mut volume = 1;
    for (k, &size) in sizes.iter().enumerate().rev() {
        strides[k] = volume;
        volume *= size + 1;
    }
    (strides, volume)
}

fn decode(flat: usize, sizes: &[usize], strides: &[usize]) -> Vec<usize> {
    let mut counts = vec![0; sizes.len()];
    let mut rest = flat;
    for (k, &stride) in strides.iter().enumerate() {
        counts[k] = rest / stride;
        rest %= stride;
    }
    counts
}

/// Walks every count vector `0 <= n_k <= bounds[k]` in row-major order.
pub(crate) fn for_each_count_vector(bounds: &[usize], mut f: impl FnMut(&[usize])) {
    let mut counts = vec![0usize; bounds.len()];
    loop {
        f(&counts);
        let mut k = bounds.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            if counts[k] < bounds[k] {
                counts[k] += 1;
                break;
            }
            counts[k] = 0;
        }
    }
}

/// Builds the dense coalition cost table for a class structure.
pub fn build_cost_table(
    ctx: &CostContext,
    classes: &ClassStructure,
) -> Result<CoalitionCostTable, AllocationError> {
    CoalitionCostTable::build(ctx, classes)
}
