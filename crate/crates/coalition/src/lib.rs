//! Cost allocation for energy communities that share wind generation and
//! battery storage.
//!
//! The crate simulates a community battery against aggregate demand and
//! wind generation, prices the resulting grid exchange and asset wear, and
//! splits the annual cost among heterogeneous consumer classes.  The exact
//! Shapley value is computed either per agent (subset enumeration, small
//! coalitions only) or per class, where agents within a class share a demand
//! profile and the combinatorics collapse to a table over class counts.
//! Two deterministic approximations (marginal contribution and stratified
//! expected value) and one stratified adaptive sampler complete the method
//! set; the experiments module benchmarks all of them over community size
//! and composition sweeps.
//!
//! All numerics are `f64`. Conventions used throughout:
//!
//! * power in kW, energy in kWh, state of charge in kWh (percent of usable
//!   maximum only at the degradation interface),
//! * tariffs in pence/kWh, costs in GBP per year,
//! * timestep length in hours (half-hourly data uses `dt = 0.5`).
//!
//! Every solver is deterministic: fixed seeds feed per-class ChaCha
//! substreams, and parallel work either fills independent slots or reduces
//! in a fixed order, so results are byte-identical across runs and thread
//! counts.

pub mod allocation;
pub mod config;
pub mod cost;
pub mod degradation;
pub mod experiments;
pub mod profiles;
pub mod simulation;
pub mod timeseries;

pub use allocation::{
    adaptive_sampling_alloc, average_relative_difference, build_cost_table, exact_shapley_kclass,
    exact_shapley_naive, marginal_contribution_alloc, multivariate_hypergeometric_pmf,
    relative_difference, sev_alloc, AllocationResult, ClassStructure, CoalitionCostTable, Method,
};
pub use cost::{battery_cost, coalition_cost, grid_cost, wind_cost, AssetConfig, CoalitionCost};
pub use degradation::{
    depreciation_factor, dod_equivalent, rainflow_count, Cycle, CycleKind, CycleLifeTable,
};
pub use profiles::{
    filter_winter_weekdays, generate_synthetic_community, kmeans, l2_normalize,
    synthesize_class_profiles, ClusterModel,
};
pub use simulation::{simulate, BatterySpec, SimulationTrace, TariffSchedule};
pub use timeseries::{
    aggregate_demand, interpolate_missing, load_demand_csv, wind_power_from_speed, DemandMatrix,
    GenerationSeries, PowerCurve,
};

/// Environment variable that caps the rayon worker count for all parallel
/// sections. Unset or unparsable values fall back to hardware parallelism.
pub const THREADS_ENV_VAR: &str = "COALITION_THREADS";
