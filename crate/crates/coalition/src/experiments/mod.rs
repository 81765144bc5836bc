//! Benchmark sweeps: run the allocation methods over community size and
//! composition grids, measure each approximation against the exact value,
//! and write the results as CSV tables and SVG charts.
//!
//! All result files except `*_timings.csv` are byte-deterministic: the
//! solvers are seeded, floats are written with Rust's shortest-roundtrip
//! formatting, and rows come out in a fixed order. Wall-clock measurements
//! are quarantined in the timings file so the deterministic outputs can be
//! diffed across runs.

pub mod plot;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::allocation::{
    adaptive_sampling_alloc, average_relative_difference, exact_shapley_kclass,
    exact_shapley_naive, marginal_contribution_alloc, relative_difference, sev_alloc,
    AllocationError, ClassStructure, CoalitionCostTable, Method,
};
use crate::config::{AppConfig, ConfigError};
use crate::cost::{CostContext, CostError};
use crate::degradation::CycleLifeTable;
use crate::profiles::{
    apportion, generate_synthetic_community, tile_daily_shape, Archetype, ProfileError,
    SyntheticCommunityConfig,
};
use crate::timeseries::{DemandMatrix, TimeseriesError};
use plot::{line_chart, Series, YScale};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Timeseries(#[from] TimeseriesError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("csv error for {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("sweep produced no points")]
    EmptySweep,
}

/// One allocation method evaluated at one sweep point.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    /// Cost per agent of each class (GBP/year), class order of the point.
    pub per_class_cost_gbp: Vec<f64>,
    /// Per-class relative difference against the exact value (%); empty
    /// for the exact baseline itself.
    pub rd_percent: Vec<f64>,
    /// Size-weighted mean of `rd_percent`; `None` for the exact baseline.
    pub avg_rd_percent: Option<f64>,
    /// Cost-pipeline evaluations the method itself triggered (table
    /// lookups are free and do not count).
    pub live_evaluations: u64,
    /// Wall-clock seconds; nondeterministic, only ever written to the
    /// timings file.
    pub wall_seconds: f64,
}

/// All methods evaluated on one community (one sweep grid point).
#[derive(Debug, Clone)]
pub struct SweepPoint {
    /// Grid label, e.g. `"N=40"` or `"shares=55/15/20/10"`.
    pub label: String,
    pub n_agents: usize,
    pub class_names: Vec<String>,
    pub class_sizes: Vec<usize>,
    /// Cost of the grand coalition (GBP/year).
    pub community_total_gbp: f64,
    /// Cost evaluations spent building the exact table.
    pub table_evaluations: u64,
    pub table_wall_seconds: f64,
    /// Exact baseline first, then the requested approximations.
    pub runs: Vec<MethodRun>,
}

/// A full sweep: a scenario name plus its grid points in sweep order.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub scenario: String,
    pub points: Vec<SweepPoint>,
}

/// Synthetic household population used to derive demand profiles: the
/// default archetype mix with per-agent size spread and sample noise.
pub fn synthetic_population(
    config: &AppConfig,
    n_agents: usize,
    seed: u64,
) -> Result<DemandMatrix, ExperimentError> {
    let (matrix, _) = generate_synthetic_community(&SyntheticCommunityConfig {
        n_agents,
        timesteps: config.timesteps,
        dt_h: config.dt_hours,
        seed,
        ..SyntheticCommunityConfig::default()
    })?;
    Ok(matrix)
}

/// Splits a household population into "small" and "large" consumer
/// profiles: agents are ranked by total consumption and the lower
/// `1 - large_share` and upper `large_share` groups are averaged
/// elementwise. Returns the two profiles with their names.
pub fn small_large_profiles(
    population: &DemandMatrix,
    large_share: f64,
) -> Result<(Vec<Vec<f64>>, Vec<String>), ExperimentError> {
    let n = population.n_agents();
    if n < 2 || !(0.0..1.0).contains(&large_share) || large_share <= 0.0 {
        return Err(ExperimentError::Allocation(AllocationError::InvalidCounts(
            format!("need >= 2 agents and a large-consumer share in (0, 1), got n={n}, share={large_share}"),
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let totals: Vec<f64> = (0..n)
        .map(|i| population.row(i).iter().sum::<f64>())
        .collect();
    order.sort_by(|&a, &b| totals[a].partial_cmp(&totals[b]).unwrap().then(a.cmp(&b)));

    let n_large = ((n as f64 * large_share).round() as usize).clamp(1, n - 1);
    let split = n - n_large;
    let mean_rows = |members: &[usize]| -> Vec<f64> {
        let mut out = vec![0.0; population.timesteps()];
        for &i in members {
            for (acc, v) in out.iter_mut().zip(population.row(i)) {
                *acc += v;
            }
        }
        let scale = 1.0 / members.len() as f64;
        out.iter_mut().for_each(|v| *v *= scale);
        out
    };
    let small = mean_rows(&order[..split]);
    let large = mean_rows(&order[split..]);
    Ok((vec![small, large], vec!["small".into(), "large".into()]))
}

/// Four archetype demand shapes tiled over the horizon, with their names.
/// The shapes are unscaled; size them per community with
/// [`crate::profiles::synthesize_class_profiles`].
pub fn four_class_shapes(timesteps: usize) -> (Vec<Vec<f64>>, Vec<String>) {
    let shapes = Archetype::ALL
        .iter()
        .map(|a| tile_daily_shape(&a.daily_shape(), timesteps))
        .collect();
    let names = Archetype::ALL.iter().map(|a| a.name().to_string()).collect();
    (shapes, names)
}

/// Runs the exact baseline plus the requested approximations on one
/// community. The exact table is built once and shared by every method
/// that can use it; only profile-based methods touch the live pipeline.
pub fn evaluate_point(
    ctx: &CostContext,
    classes: &ClassStructure,
    methods: &[Method],
    sampler: &crate::allocation::SamplerConfig,
    label: String,
) -> Result<SweepPoint, ExperimentError> {
    ctx.reset_evaluations();
    let table_start = Instant::now();
    let table = CoalitionCostTable::build(ctx, classes)?;
    let table_wall_seconds = table_start.elapsed().as_secs_f64();
    let table_evaluations = ctx.evaluations();

    ctx.reset_evaluations();
    let exact_start = Instant::now();
    let exact = exact_shapley_kclass(&table, classes)?;
    let exact_run = MethodRun {
        method: Method::ExactKclass,
        per_class_cost_gbp: exact.clone(),
        rd_percent: Vec::new(),
        avg_rd_percent: None,
        live_evaluations: ctx.evaluations(),
        wall_seconds: exact_start.elapsed().as_secs_f64(),
    };

    let mut runs = vec![exact_run];
    for &method in methods {
        if method == Method::ExactKclass {
            continue;
        }
        ctx.reset_evaluations();
        let start = Instant::now();
        let values = match method {
            Method::ExactKclass => unreachable!("baseline handled above"),
            Method::ExactNaive => naive_on_classes(&table, classes)?,
            Method::MarginalContribution => marginal_contribution_alloc(&table, classes)?,
            Method::Sev => sev_alloc(ctx, classes)?,
            Method::AdaptiveSampling => adaptive_sampling_alloc(&table, classes, sampler)?.0,
        };
        let wall_seconds = start.elapsed().as_secs_f64();
        let rd_percent: Vec<f64> = values
            .iter()
            .zip(&exact)
            .map(|(&est, &truth)| relative_difference(est, truth))
            .collect::<Result<_, _>>()?;
        let avg = average_relative_difference(&values, &exact, classes.sizes())?;
        runs.push(MethodRun {
            method,
            per_class_cost_gbp: values,
            rd_percent,
            avg_rd_percent: Some(avg),
            live_evaluations: ctx.evaluations(),
            wall_seconds,
        });
    }

    Ok(SweepPoint {
        label,
        n_agents: classes.n_total(),
        class_names: classes.names().to_vec(),
        class_sizes: classes.sizes().to_vec(),
        community_total_gbp: table.grand_cost(),
        table_evaluations,
        table_wall_seconds,
        runs,
    })
}

/// Per-agent subset enumeration evaluated through the class table (agents
/// of one class are interchangeable, so a subset's cost depends only on
/// its per-class counts). Returns per-class values by reading any one
/// member of each class.
fn naive_on_classes(
    table: &CoalitionCostTable,
    classes: &ClassStructure,
) -> Result<Vec<f64>, AllocationError> {
    // Expand to one row per agent so the enumeration sees individuals.
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut class_of_agent = Vec::new();
    for (k, (profile, &size)) in classes.profiles().iter().zip(classes.sizes()).enumerate() {
        for member in 0..size {
            ids.push(format!("{}_{member}", classes.names()[k]));
            rows.push(profile.clone());
            class_of_agent.push(k);
        }
    }
    let demands = DemandMatrix::new(ids, rows)
        .map_err(|e| AllocationError::InvalidCounts(e.to_string()))?;
    let k = classes.k();
    let by_members = move |members: &[usize]| -> f64 {
        let mut counts = vec![0usize; k];
        for &agent in members {
            counts[class_of_agent[agent]] += 1;
        }
        table.cost(&counts)
    };
    let per_agent = exact_shapley_naive(
        &demands,
        &by_members,
        crate::allocation::DEFAULT_NAIVE_AGENT_LIMIT,
    )?;
    // First member of each class carries the class value.
    let mut out = Vec::with_capacity(k);
    let mut offset = 0;
    for &size in classes.sizes() {
        out.push(per_agent[offset]);
        offset += size;
    }
    Ok(out)
}

/// Community-size sweep: two consumer classes ("small"/"large") derived
/// from a synthetic household population, head counts split by the
/// configured ratio, one point per requested community size.
pub fn run_size_sweep(config: &AppConfig, seed: u64) -> Result<SweepReport, ExperimentError> {
    let population = synthetic_population(config, 200, seed)?;
    let large_share = shares_tail(&config.sweep.ratio);
    let (profiles, names) = small_large_profiles(&population, large_share)?;

    let generation = config.wind.generation_base(config.timesteps)?;
    let tariffs = config.tariffs.schedule();
    let cycle_life = CycleLifeTable::synthetic_default();
    let battery = config.battery.per_agent_spec()?;

    let mut points = Vec::new();
    for &n in &config.sweep.sizes {
        let sizes = apportion(&config.sweep.ratio, n)?;
        if sizes.iter().any(|&s| s == 0) {
            // Too few agents to populate every class at this ratio.
            continue;
        }
        let classes =
            ClassStructure::with_names(names.clone(), profiles.clone(), sizes.clone())?;
        let ctx = CostContext::new(
            &generation,
            battery,
            &tariffs,
            config.asset_config(n),
            &cycle_life,
            config.dt_hours,
        )?;
        points.push(evaluate_point(
            &ctx,
            &classes,
            &config.sweep.methods,
            &config.sampler,
            format!("N={n}"),
        )?);
    }
    if points.is_empty() {
        return Err(ExperimentError::EmptySweep);
    }
    Ok(SweepReport {
        scenario: "size_sweep".into(),
        points,
    })
}

/// Composition sweep: four archetype classes at fixed community size. The
/// first two class shares trade off against each other while the rest stay
/// fixed; share steps of 5% run from 65/5 down to 5/65.
pub fn run_composition_sweep(
    config: &AppConfig,
    annual_kwh_mean: f64,
) -> Result<SweepReport, ExperimentError> {
    let n = config.sweep.composition_size;
    let (shapes, names) = four_class_shapes(config.timesteps);

    let generation = config.wind.generation_base(config.timesteps)?;
    let tariffs = config.tariffs.schedule();
    let cycle_life = CycleLifeTable::synthetic_default();
    let battery = config.battery.per_agent_spec()?;

    // Summed readings the scaled community must hit so the mean agent
    // consumes `annual_kwh_mean` over a year.
    let reference_total = n as f64 * annual_kwh_mean * config.timesteps as f64 / 8760.0;

    let mut points = Vec::new();
    let mut first_pct = 65i64;
    while first_pct >= 5 {
        let second_pct = 70 - first_pct;
        let shares = [first_pct as f64, second_pct as f64, 20.0, 10.0];
        let sizes = apportion(&shares, n)?;
        if sizes.iter().any(|&s| s == 0) {
            first_pct -= 5;
            continue;
        }
        let profiles =
            crate::profiles::synthesize_class_profiles(&shapes, &sizes, reference_total)?;
        let classes = ClassStructure::with_names(names.clone(), profiles, sizes.clone())?;
        let ctx = CostContext::new(
            &generation,
            battery,
            &tariffs,
            config.asset_config(n),
            &cycle_life,
            config.dt_hours,
        )?;
        points.push(evaluate_point(
            &ctx,
            &classes,
            &config.sweep.methods,
            &config.sampler,
            format!("shares={first_pct}/{second_pct}/20/10"),
        )?);
        first_pct -= 5;
    }
    if points.is_empty() {
        return Err(ExperimentError::EmptySweep);
    }
    Ok(SweepReport {
        scenario: "composition_sweep".into(),
        points,
    })
}

/// Share of the last class in a ratio vector (the "large consumer" share
/// for the two-class sweep).
fn shares_tail(ratio: &[f64]) -> f64 {
    let sum: f64 = ratio.iter().sum();
    if sum <= 0.0 || ratio.is_empty() {
        return 0.1;
    }
    ratio[ratio.len() - 1] / sum
}

#[derive(Serialize)]
struct AllocationRow<'a> {
    scenario: &'a str,
    label: &'a str,
    n_agents: usize,
    method: &'a str,
    class: &'a str,
    class_size: usize,
    cost_gbp_per_agent: f64,
}

#[derive(Serialize)]
struct RdRow<'a> {
    scenario: &'a str,
    label: &'a str,
    n_agents: usize,
    method: &'a str,
    class: &'a str,
    rd_percent: f64,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    scenario: &'a str,
    label: &'a str,
    n_agents: usize,
    community_total_gbp: f64,
    method: &'a str,
    avg_rd_percent: Option<f64>,
    live_evaluations: u64,
    table_evaluations: u64,
}

#[derive(Serialize)]
struct TimingRow<'a> {
    scenario: &'a str,
    label: &'a str,
    method: &'a str,
    wall_seconds: f64,
}

/// Writes the report as CSV tables and SVG charts under `dir`, one file
/// set per scenario. Returns the paths written. Every file except
/// `*_timings.csv` is byte-deterministic.
pub fn write_report(report: &SweepReport, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();
    let file = |name: &str| dir.join(format!("{}_{name}", report.scenario));

    let allocations = file("allocations.csv");
    write_csv(&allocations, report, |point, writer| {
        for run in &point.runs {
            for (k, &cost) in run.per_class_cost_gbp.iter().enumerate() {
                writer.serialize(AllocationRow {
                    scenario: &report.scenario,
                    label: &point.label,
                    n_agents: point.n_agents,
                    method: run.method.as_str(),
                    class: &point.class_names[k],
                    class_size: point.class_sizes[k],
                    cost_gbp_per_agent: cost,
                })?;
            }
        }
        Ok(())
    })?;
    written.push(allocations);

    let rd = file("relative_differences.csv");
    write_csv(&rd, report, |point, writer| {
        for run in &point.runs {
            for (k, &rd) in run.rd_percent.iter().enumerate() {
                writer.serialize(RdRow {
                    scenario: &report.scenario,
                    label: &point.label,
                    n_agents: point.n_agents,
                    method: run.method.as_str(),
                    class: &point.class_names[k],
                    rd_percent: rd,
                })?;
            }
        }
        Ok(())
    })?;
    written.push(rd);

    let summary = file("summary.csv");
    write_csv(&summary, report, |point, writer| {
        for run in &point.runs {
            writer.serialize(SummaryRow {
                scenario: &report.scenario,
                label: &point.label,
                n_agents: point.n_agents,
                community_total_gbp: point.community_total_gbp,
                method: run.method.as_str(),
                avg_rd_percent: run.avg_rd_percent,
                live_evaluations: run.live_evaluations,
                table_evaluations: point.table_evaluations,
            })?;
        }
        Ok(())
    })?;
    written.push(summary);

    let timings = file("timings.csv");
    write_csv(&timings, report, |point, writer| {
        writer.serialize(TimingRow {
            scenario: &report.scenario,
            label: &point.label,
            method: "table_build",
            wall_seconds: point.table_wall_seconds,
        })?;
        for run in &point.runs {
            writer.serialize(TimingRow {
                scenario: &report.scenario,
                label: &point.label,
                method: run.method.as_str(),
                wall_seconds: run.wall_seconds,
            })?;
        }
        Ok(())
    })?;
    written.push(timings);

    if let Some(svg) = avg_rd_chart(report) {
        let path = file("avg_rd.svg");
        fs::write(&path, svg).map_err(|source| ExperimentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        written.push(path);
    }
    if let Some(svg) = allocation_chart(report) {
        let path = file("exact_allocations.svg");
        fs::write(&path, svg).map_err(|source| ExperimentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

fn write_csv(
    path: &Path,
    report: &SweepReport,
    mut emit: impl FnMut(&SweepPoint, &mut csv::Writer<fs::File>) -> Result<(), csv::Error>,
) -> Result<(), ExperimentError> {
    let wrap = |source: csv::Error| ExperimentError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(wrap)?;
    for point in &report.points {
        emit(point, &mut writer).map_err(wrap)?;
    }
    writer.flush().map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// Accuracy chart: average relative difference (log axis) against the
/// grid position, one line per approximation.
fn avg_rd_chart(report: &SweepReport) -> Option<String> {
    let methods: Vec<Method> = report
        .points
        .first()?
        .runs
        .iter()
        .filter(|r| r.avg_rd_percent.is_some())
        .map(|r| r.method)
        .collect();
    let series: Vec<Series> = methods
        .iter()
        .map(|&method| Series {
            name: method.as_str().to_string(),
            points: report
                .points
                .iter()
                .enumerate()
                .filter_map(|(i, point)| {
                    let run = point.runs.iter().find(|r| r.method == method)?;
                    Some((grid_x(report, i, point), run.avg_rd_percent?))
                })
                .collect(),
        })
        .collect();
    line_chart(
        &format!("{}: accuracy against the exact value", report.scenario),
        grid_axis_label(report),
        "average relative difference (%)",
        &series,
        YScale::Log,
    )
}

/// Exact per-class cost per agent across the grid, one line per class.
fn allocation_chart(report: &SweepReport) -> Option<String> {
    let names = report.points.first()?.class_names.clone();
    let series: Vec<Series> = names
        .iter()
        .enumerate()
        .map(|(k, name)| Series {
            name: name.clone(),
            points: report
                .points
                .iter()
                .enumerate()
                .filter_map(|(i, point)| {
                    let exact = point.runs.iter().find(|r| r.method == Method::ExactKclass)?;
                    Some((grid_x(report, i, point), *exact.per_class_cost_gbp.get(k)?))
                })
                .collect(),
        })
        .collect();
    line_chart(
        &format!("{}: exact cost shares", report.scenario),
        grid_axis_label(report),
        "cost per agent (GBP/year)",
        &series,
        YScale::Linear,
    )
}

/// Size sweeps plot against the community size; other grids use the point
/// index.
fn grid_x(report: &SweepReport, index: usize, point: &SweepPoint) -> f64 {
    if report.scenario == "size_sweep" {
        point.n_agents as f64
    } else {
        index as f64
    }
}

fn grid_axis_label(report: &SweepReport) -> &'static str {
    if report.scenario == "size_sweep" {
        "community size (agents)"
    } else {
        "grid point"
    }
}
