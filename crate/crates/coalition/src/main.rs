//! Command-line front end: simulate a community battery, allocate annual
//! costs across consumer classes, run the benchmark sweeps, cluster
//! household load data, and generate synthetic communities.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use coalition::allocation::{
    adaptive_sampling_alloc, build_cost_table, exact_shapley_kclass, exact_shapley_naive,
    marginal_contribution_alloc, sev_alloc, ClassGame, ClassStructure, Method,
    DEFAULT_NAIVE_AGENT_LIMIT,
};
use coalition::config::AppConfig;
use coalition::cost::{coalition_cost, CostContext};
use coalition::degradation::CycleLifeTable;
use coalition::experiments::{run_composition_sweep, run_size_sweep, write_report};
use coalition::profiles::{
    filter_winter_weekdays, generate_synthetic_community, kmeans, l2_normalize, mean_day,
    synthesize_class_profiles, SyntheticCommunityConfig,
};
use coalition::timeseries::{
    load_demand_csv, load_demand_csv_lenient, write_demand_csv, DemandMatrix,
};
use coalition::THREADS_ENV_VAR;

#[derive(Parser)]
#[command(
    name = "coalition",
    about = "Cost allocation for energy communities with shared wind and storage",
    version
)]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Worker thread cap (overrides the COALITION_THREADS variable).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the community battery for a coalition and print its cost.
    Simulate(SimulateArgs),
    /// Allocate the community's annual cost across consumer classes.
    Allocate(AllocateArgs),
    /// Benchmark the methods over a range of community sizes.
    SweepSize(SweepArgs),
    /// Benchmark the methods over class-share compositions.
    SweepComposition(SweepArgs),
    /// Cluster household demand into consumer classes.
    Cluster(ClusterArgs),
    /// Generate a synthetic community demand matrix.
    Synth(SynthArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Demand CSV: one header column per agent, one row per timestep.
    #[arg(long)]
    demand: PathBuf,
    /// Coalition members as comma-separated agent indices; all when omitted.
    #[arg(long)]
    members: Option<String>,
    /// Output CSV for the dispatch trace; skipped when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AllocateArgs {
    /// Demand CSV: one header column per agent, one row per timestep.
    #[arg(long)]
    demand: PathBuf,
    /// Labels CSV with header `agent_id,class` assigning each agent to a
    /// class. Without it every agent forms its own class.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Methods to run (comma separated): exact, naive, mc, sev, sampling.
    #[arg(long, default_value = "exact")]
    methods: String,
    /// Output CSV for the allocation table; skipped when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the sampling method (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Directory for the result CSVs and charts.
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    /// Seed for the synthetic population and the sampling method.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mean annual consumption per agent (kWh) for synthetic profiles.
    #[arg(long, default_value_t = 3500.0)]
    annual_kwh: f64,
}

#[derive(Args)]
struct ClusterArgs {
    /// Demand CSV; gaps are tolerated, low-coverage agents are dropped.
    #[arg(long)]
    demand: PathBuf,
    /// Number of clusters.
    #[arg(short, long, default_value_t = 9)]
    k: usize,
    /// Minimum fraction of present samples an agent needs to be kept.
    #[arg(long, default_value_t = 0.95)]
    min_coverage: f64,
    /// Seed for centroid initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for labels, day-shape centroids, and class profiles.
    #[arg(long, default_value = "clusters")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of agents to generate.
    #[arg(long, default_value_t = 200)]
    agents: usize,
    /// Seed for the generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV for the demand matrix.
    #[arg(long, default_value = "synthetic_demand.csv")]
    out: PathBuf,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    init_threads(cli.threads)?;
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(args) => simulate_cmd(&config, &args),
        Command::Allocate(args) => allocate_cmd(&config, &args),
        Command::SweepSize(args) => {
            let report = run_size_sweep(&config, args.seed)?;
            let written = write_report(&report, &args.out_dir)?;
            print_written(&written);
            Ok(())
        }
        Command::SweepComposition(args) => {
            let report = run_composition_sweep(&config, args.annual_kwh)?;
            let written = write_report(&report, &args.out_dir)?;
            print_written(&written);
            Ok(())
        }
        Command::Cluster(args) => cluster_cmd(&config, &args),
        Command::Synth(args) => synth_cmd(&config, &args),
    }
}

fn init_threads(flag: Option<usize>) -> Result<()> {
    let threads = flag.or_else(|| {
        std::env::var(THREADS_ENV_VAR)
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("worker pool is already initialized")?;
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<AppConfig> {
    match path {
        Some(p) => AppConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(AppConfig::default()),
    }
}

fn print_written(paths: &[PathBuf]) {
    for path in paths {
        println!("wrote {}", path.display());
    }
}

/// Shared cost-pipeline ingredients, borrowed by a [`CostContext`].
struct PipelineParts {
    generation: Vec<f64>,
    tariffs: coalition::simulation::TariffSchedule,
    cycle_life: CycleLifeTable,
    battery: coalition::simulation::BatterySpec,
}

impl PipelineParts {
    fn new(config: &AppConfig, timesteps: usize) -> Result<Self> {
        let mut horizon = config.clone();
        horizon.timesteps = timesteps;
        Ok(Self {
            generation: horizon.wind.generation_base(timesteps)?,
            tariffs: config.tariffs.schedule(),
            cycle_life: CycleLifeTable::synthetic_default(),
            battery: config.battery.per_agent_spec()?,
        })
    }

    fn context(&self, config: &AppConfig, community_size: usize) -> Result<CostContext<'_>> {
        Ok(CostContext::new(
            &self.generation,
            self.battery,
            &self.tariffs,
            config.asset_config(community_size),
            &self.cycle_life,
            config.dt_hours,
        )?)
    }
}

fn simulate_cmd(config: &AppConfig, args: &SimulateArgs) -> Result<()> {
    let demands = load_demand_csv(&args.demand)
        .with_context(|| format!("loading {}", args.demand.display()))?;
    let members = match &args.members {
        Some(spec) => parse_members(spec, demands.n_agents())?,
        None => (0..demands.n_agents()).collect(),
    };
    if members.is_empty() {
        bail!("the coalition needs at least one member");
    }

    let parts = PipelineParts::new(config, demands.timesteps())?;
    let ctx = parts.context(config, demands.n_agents())?;
    let cost = coalition_cost(&ctx, &demands, &members)?;

    println!("coalition of {} agent(s)", members.len());
    println!("  grid     {:>12.2} GBP/year", cost.grid_gbp);
    println!("  wind     {:>12.2} GBP/year", cost.wind_gbp);
    println!("  battery  {:>12.2} GBP/year", cost.battery_gbp);
    println!("  total    {:>12.2} GBP/year", cost.total_gbp);
    println!("  battery depreciation factor {:.6e}", cost.depreciation_factor);

    if let Some(out) = &args.out {
        let aggregate = coalition::timeseries::aggregate_demand(&demands, &members)?;
        let basis = ctx.assets().basis(members.len());
        let battery = ctx.battery_for_basis(basis);
        let wind_share = ctx.assets().wind_scale_per_agent * basis as f64;
        let generation: Vec<f64> = parts.generation.iter().map(|&g| wind_share * g).collect();
        let trace =
            coalition::simulation::simulate(&aggregate, &generation, &battery, config.dt_hours)?;
        write_trace_csv(out, &aggregate, &generation, &trace)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn write_trace_csv(
    path: &Path,
    demand: &[f64],
    generation: &[f64],
    trace: &coalition::simulation::SimulationTrace,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    writer.write_record([
        "step",
        "demand_kw",
        "generation_kw",
        "p_bat_kw",
        "soc_kwh",
        "p_grid_kw",
    ])?;
    for t in 0..trace.timesteps() {
        writer.write_record([
            t.to_string(),
            demand[t].to_string(),
            generation[t].to_string(),
            trace.p_bat_kw[t].to_string(),
            trace.soc_kwh[t].to_string(),
            trace.p_grid_kw[t].to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn parse_members(spec: &str, n_agents: usize) -> Result<Vec<usize>> {
    let mut members = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let idx: usize = part
            .parse()
            .with_context(|| format!("'{part}' is not an agent index"))?;
        if idx >= n_agents {
            bail!("agent index {idx} is out of range (matrix has {n_agents} agents)");
        }
        if !members.contains(&idx) {
            members.push(idx);
        }
    }
    Ok(members)
}

fn allocate_cmd(config: &AppConfig, args: &AllocateArgs) -> Result<()> {
    let demands = load_demand_csv(&args.demand)
        .with_context(|| format!("loading {}", args.demand.display()))?;
    let classes = match &args.labels {
        Some(path) => classes_from_labels(&demands, path)?,
        None => ClassStructure::singletons(&demands)?,
    };
    let methods: Vec<Method> = args
        .methods
        .split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(|m| m.parse().map_err(anyhow::Error::msg))
        .collect::<Result<_>>()?;
    if methods.is_empty() {
        bail!("no methods requested");
    }

    let parts = PipelineParts::new(config, demands.timesteps())?;
    let ctx = parts.context(config, classes.n_total())?;

    // The dense table pays off once any exact value is requested; the
    // other methods then run against it for free. Otherwise everything
    // prices coalitions through the live pipeline.
    let needs_table = methods.contains(&Method::ExactKclass);
    let table = if needs_table {
        let volume: usize = classes.sizes().iter().map(|&s| s + 1).product();
        eprintln!(
            "building cost table: {volume} coalition evaluations over {} classes",
            classes.k()
        );
        Some(build_cost_table(&ctx, &classes)?)
    } else {
        None
    };
    let game = ClassGame {
        ctx: &ctx,
        classes: &classes,
    };
    let mut sampler = config.sampler.clone();
    if let Some(seed) = args.seed {
        sampler.seed = seed;
    }

    let mut rows: Vec<(Method, Vec<f64>)> = Vec::new();
    for &method in &methods {
        let values = match (method, &table) {
            (Method::ExactKclass, Some(table)) => exact_shapley_kclass(table, &classes)?,
            (Method::ExactKclass, None) => unreachable!("table built above"),
            (Method::ExactNaive, _) => naive_per_class(&ctx, &demands, &classes)?,
            (Method::MarginalContribution, Some(table)) => {
                marginal_contribution_alloc(table, &classes)?
            }
            (Method::MarginalContribution, None) => marginal_contribution_alloc(&game, &classes)?,
            (Method::Sev, _) => sev_alloc(&ctx, &classes)?,
            (Method::AdaptiveSampling, Some(table)) => {
                adaptive_sampling_alloc(table, &classes, &sampler)?.0
            }
            (Method::AdaptiveSampling, None) => adaptive_sampling_alloc(&game, &classes, &sampler)?.0,
        };
        rows.push((method, values));
    }

    println!(
        "{:<10} {:<20} {:>6} {:>18}",
        "method", "class", "size", "GBP/year per agent"
    );
    for (method, values) in &rows {
        for (k, value) in values.iter().enumerate() {
            println!(
                "{:<10} {:<20} {:>6} {:>18.4}",
                method.as_str(),
                classes.names()[k],
                classes.sizes()[k],
                value
            );
        }
    }

    if let Some(out) = &args.out {
        let mut writer = csv::Writer::from_path(out)
            .with_context(|| format!("creating {}", out.display()))?;
        writer.write_record(["method", "class", "class_size", "cost_gbp_per_agent"])?;
        for (method, values) in &rows {
            for (k, value) in values.iter().enumerate() {
                writer.write_record([
                    method.as_str().to_string(),
                    classes.names()[k].clone(),
                    classes.sizes()[k].to_string(),
                    value.to_string(),
                ])?;
            }
        }
        writer.flush()?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

/// Per-agent subset enumeration collapsed back onto the classes: the
/// first member of every class reports the class value (members of one
/// class have identical rows, so their values agree bitwise).
fn naive_per_class(
    ctx: &CostContext,
    demands: &DemandMatrix,
    classes: &ClassStructure,
) -> Result<Vec<f64>> {
    let by_members = |members: &[usize]| -> f64 {
        coalition_cost(ctx, demands, members)
            .expect("demand length was validated against the context")
            .total_gbp
    };
    let per_agent = exact_shapley_naive(demands, &by_members, DEFAULT_NAIVE_AGENT_LIMIT)?;

    // Map each class to its first member in the matrix. Classes built
    // from labels keep matrix order; singleton classes are the identity.
    let mut next_member = 0usize;
    let values = classes
        .sizes()
        .iter()
        .map(|&size| {
            let v = per_agent[next_member];
            next_member += size;
            v
        })
        .collect();
    Ok(values)
}

/// Reads `agent_id,class` rows and builds the class structure; class
/// order follows first appearance in the file.
fn classes_from_labels(demands: &DemandMatrix, path: &Path) -> Result<ClassStructure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("loading {}", path.display()))?;
    let mut by_id: HashMap<String, String> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        if record.len() < 2 {
            bail!("label rows need two fields: agent_id,class");
        }
        by_id.insert(record[0].to_string(), record[1].to_string());
    }

    let mut names: Vec<String> = Vec::new();
    let mut labels = Vec::with_capacity(demands.n_agents());
    for id in demands.agent_ids() {
        let class = by_id
            .get(id)
            .with_context(|| format!("agent '{id}' has no label in {}", path.display()))?;
        let index = match names.iter().position(|n| n == class) {
            Some(i) => i,
            None => {
                names.push(class.clone());
                names.len() - 1
            }
        };
        labels.push(index);
    }
    Ok(ClassStructure::from_assignments(demands, &labels, names)?)
}

fn cluster_cmd(config: &AppConfig, args: &ClusterArgs) -> Result<()> {
    let raw = load_demand_csv_lenient(&args.demand)
        .with_context(|| format!("loading {}", args.demand.display()))?;
    let total_agents = raw.agent_ids.len();
    let matrix = raw
        .drop_low_coverage(args.min_coverage)
        .interpolate()
        .context("gap filling failed")?;
    if matrix.n_agents() == 0 {
        bail!("no agent meets the {:.0}% coverage threshold", args.min_coverage * 100.0);
    }
    if matrix.n_agents() < total_agents {
        eprintln!(
            "dropped {} of {total_agents} agents below {:.0}% coverage",
            total_agents - matrix.n_agents(),
            args.min_coverage * 100.0
        );
    }

    // Normalize out household size, keep winter weekdays, and compress
    // each agent to its mean winter day before clustering.
    let normalized = l2_normalize(matrix.rows())?;
    let (winter, kept_days) = filter_winter_weekdays(&normalized, &config.calendar)?;
    let day_shapes = mean_day(&winter, config.calendar.steps_per_day)?;
    let model = kmeans(&day_shapes, args.k, args.seed, 100)?;

    println!(
        "clustered {} agents over {} winter weekdays into {} groups (inertia {:.6}, {} iterations)",
        matrix.n_agents(),
        kept_days.len(),
        args.k,
        model.inertia,
        model.iterations
    );
    for (cluster, size) in model.cluster_sizes().iter().enumerate() {
        println!("  cluster {cluster}: {size} agent(s)");
    }

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let labels_path = args.out_dir.join("labels.csv");
    let mut writer = csv::Writer::from_path(&labels_path)?;
    writer.write_record(["agent_id", "class"])?;
    for (id, &label) in matrix.agent_ids().iter().zip(&model.labels) {
        writer.write_record([id.clone(), format!("cluster{label}")])?;
    }
    writer.flush()?;
    println!("wrote {}", labels_path.display());

    let centroid_path = args.out_dir.join("centroids.csv");
    let centroid_ids = (0..model.centroids.len())
        .map(|c| format!("cluster{c}"))
        .collect();
    let centroid_matrix = DemandMatrix::new(centroid_ids, model.centroids.clone())?;
    write_demand_csv(&centroid_path, &centroid_matrix)?;
    println!("wrote {}", centroid_path.display());

    // Year-long class profiles: mean normalized row per cluster, scaled so
    // the community at the observed class sizes reproduces the input total.
    let mut sums = vec![vec![0.0; matrix.timesteps()]; args.k];
    let mut sizes = vec![0usize; args.k];
    for (row, &label) in normalized.iter().zip(&model.labels) {
        sizes[label] += 1;
        for (acc, v) in sums[label].iter_mut().zip(row) {
            *acc += v;
        }
    }
    let shapes: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&sizes)
        .map(|(sum, &size)| {
            if size == 0 {
                sum
            } else {
                sum.into_iter().map(|v| v / size as f64).collect()
            }
        })
        .collect();
    let reference_total: f64 = matrix.rows().iter().flatten().sum();
    let occupied: Vec<usize> = (0..args.k).filter(|&c| sizes[c] > 0).collect();
    let occupied_shapes: Vec<Vec<f64>> = occupied.iter().map(|&c| shapes[c].clone()).collect();
    let occupied_sizes: Vec<usize> = occupied.iter().map(|&c| sizes[c]).collect();
    let profiles = synthesize_class_profiles(&occupied_shapes, &occupied_sizes, reference_total)?;
    let profile_path = args.out_dir.join("class_profiles.csv");
    let profile_ids = occupied.iter().map(|&c| format!("cluster{c}")).collect();
    write_demand_csv(&profile_path, &DemandMatrix::new(profile_ids, profiles)?)?;
    println!("wrote {}", profile_path.display());
    Ok(())
}

fn synth_cmd(config: &AppConfig, args: &SynthArgs) -> Result<()> {
    let (matrix, labels) = generate_synthetic_community(&SyntheticCommunityConfig {
        n_agents: args.agents,
        timesteps: config.timesteps,
        dt_h: config.dt_hours,
        seed: args.seed,
        ..SyntheticCommunityConfig::default()
    })?;
    write_demand_csv(&args.out, &matrix)?;
    println!(
        "wrote {} ({} agents x {} timesteps, archetype counts {:?})",
        args.out.display(),
        matrix.n_agents(),
        matrix.timesteps(),
        {
            let mut counts = [0usize; 4];
            for &l in &labels {
                counts[l] += 1;
            }
            counts
        }
    );
    Ok(())
}
