//! End-to-end checks of the `coalition` binary: every subcommand runs
//! against a small synthetic community and produces well-formed output.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_coalition");

/// Two-day horizon keeps every subcommand fast.
const CONFIG: &str = r#"
timesteps = 96

[sampler]
samples_per_agent = 64
seed = 0

[sweep]
sizes = [10, 20]
ratio = [0.9, 0.1]
methods = ["mc", "sev"]

# Start the series on a Monday in November so a two-day horizon contains
# winter weekdays for the clustering filter.
[calendar]
start_month = 11
start_day = 7
start_weekday = 0
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    let config = dir.join("config.toml");
    let output = Command::new(BIN)
        .current_dir(dir)
        .args(["--config", config.to_str().unwrap()])
        .args(args)
        .output()
        .expect("binary should spawn");
    assert!(
        output.status.success(),
        "coalition {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn workspace() -> TempDir {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("config.toml"), CONFIG).unwrap();
    dir
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

/// Parses a CSV written by the binary into header fields and row fields.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
    let mut lines = text.lines();
    let header = lines
        .next()
        .expect("csv has a header")
        .split(',')
        .map(str::to_owned)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect();
    (header, rows)
}

#[test]
fn synth_then_allocate_singleton_classes() {
    let dir = workspace();
    run(
        dir.path(),
        &["synth", "--agents", "6", "--seed", "3", "--out", "demand.csv"],
    );
    let (ids, rows) = read_csv(&dir.path().join("demand.csv"));
    assert_eq!(ids.len(), 6);
    assert_eq!(rows.len(), 96);

    run(
        dir.path(),
        &[
            "allocate",
            "--demand",
            "demand.csv",
            "--methods",
            "exact,mc,sev,sampling",
            "--out",
            "alloc.csv",
        ],
    );
    let (header, rows) = read_csv(&dir.path().join("alloc.csv"));
    assert_eq!(
        header,
        ["method", "class", "class_size", "cost_gbp_per_agent"]
    );
    assert_eq!(rows.len(), 4 * 6, "four methods, one row per agent class");

    // Every method must allocate the same community total.
    let total = |method: &str| -> f64 {
        rows.iter()
            .filter(|r| r[0] == method)
            .map(|r| r[2].parse::<f64>().unwrap() * r[3].parse::<f64>().unwrap())
            .sum()
    };
    let exact = total("exact");
    assert!(exact.is_finite() && exact != 0.0);
    for method in ["mc", "sev", "sampling"] {
        let t = total(method);
        assert!(
            ((t - exact) / exact).abs() <= 1e-9,
            "{method} allocated {t}, exact allocated {exact}"
        );
    }
}

#[test]
fn allocate_with_labels_matches_subset_enumeration() {
    let dir = workspace();

    // Two classes with identical member profiles: three overnight-light
    // agents and two flat ones.
    let mut demand = String::from("a0,a1,a2,b0,b1\n");
    for t in 0..96 {
        let a = 1.0 + 0.5 * (std::f64::consts::TAU * t as f64 / 48.0).sin();
        let b = 1.0 + 0.3 * (std::f64::consts::TAU * t as f64 / 48.0).cos();
        demand.push_str(&format!("{a},{a},{a},{b},{b}\n"));
    }
    std::fs::write(dir.path().join("demand.csv"), demand).unwrap();
    std::fs::write(
        dir.path().join("labels.csv"),
        "agent_id,class\na0,evening\na1,evening\na2,evening\nb0,flat\nb1,flat\n",
    )
    .unwrap();

    run(
        dir.path(),
        &[
            "allocate",
            "--demand",
            "demand.csv",
            "--labels",
            "labels.csv",
            "--methods",
            "exact,naive",
            "--out",
            "alloc.csv",
        ],
    );
    let (_, rows) = read_csv(&dir.path().join("alloc.csv"));
    assert_eq!(rows.len(), 4, "two methods x two classes");

    let value = |method: &str, class: &str| -> f64 {
        rows.iter()
            .find(|r| r[0] == method && r[1] == class)
            .unwrap_or_else(|| panic!("no row for {method}/{class}"))[3]
            .parse()
            .unwrap()
    };
    for class in ["evening", "flat"] {
        let exact = value("exact", class);
        let naive = value("naive", class);
        assert!(
            ((exact - naive) / exact.abs().max(1e-12)).abs() <= 1e-9,
            "{class}: class solver {exact} vs subset enumeration {naive}"
        );
    }
    let sizes: Vec<&str> = rows.iter().map(|r| r[2].as_str()).collect();
    assert_eq!(sizes, ["3", "2", "3", "2"]);
}

#[test]
fn simulate_prints_cost_and_writes_trace() {
    let dir = workspace();
    run(
        dir.path(),
        &["synth", "--agents", "4", "--seed", "7", "--out", "demand.csv"],
    );
    let output = run(
        dir.path(),
        &[
            "simulate",
            "--demand",
            "demand.csv",
            "--members",
            "0,2",
            "--out",
            "trace.csv",
        ],
    );
    let text = stdout(&output);
    assert!(text.contains("coalition of 2 agent(s)"), "stdout: {text}");
    assert!(text.contains("total"), "stdout: {text}");

    let (header, rows) = read_csv(&dir.path().join("trace.csv"));
    assert_eq!(
        header,
        ["step", "demand_kw", "generation_kw", "p_bat_kw", "soc_kwh", "p_grid_kw"]
    );
    assert_eq!(rows.len(), 96);
    for row in &rows {
        let demand: f64 = row[1].parse().unwrap();
        let generation: f64 = row[2].parse().unwrap();
        let p_bat: f64 = row[3].parse().unwrap();
        let p_grid: f64 = row[5].parse().unwrap();
        assert!(
            (demand - generation - p_bat - p_grid).abs() <= 1e-9,
            "power balance violated in row {row:?}"
        );
    }
}

#[test]
fn cluster_writes_labels_shapes_and_profiles() {
    let dir = workspace();
    run(
        dir.path(),
        &["synth", "--agents", "8", "--seed", "1", "--out", "demand.csv"],
    );
    let output = run(
        dir.path(),
        &[
            "cluster",
            "--demand",
            "demand.csv",
            "-k",
            "2",
            "--out-dir",
            "clusters",
        ],
    );
    assert!(stdout(&output).contains("clustered 8 agents"));

    let (header, rows) = read_csv(&dir.path().join("clusters/labels.csv"));
    assert_eq!(header, ["agent_id", "class"]);
    assert_eq!(rows.len(), 8);
    for row in &rows {
        assert!(row[1] == "cluster0" || row[1] == "cluster1");
    }

    // Day-shape centroids: one column per cluster, one row per step of day.
    let (ids, rows) = read_csv(&dir.path().join("clusters/centroids.csv"));
    assert_eq!(ids, ["cluster0", "cluster1"]);
    assert_eq!(rows.len(), 48);

    // Scaled class profiles span the full horizon and reproduce the
    // community's total consumption at the observed class sizes.
    let (profile_ids, profile_rows) = read_csv(&dir.path().join("clusters/class_profiles.csv"));
    assert!(!profile_ids.is_empty());
    assert_eq!(profile_rows.len(), 96);

    let mut label_counts = std::collections::HashMap::new();
    let (_, label_rows) = read_csv(&dir.path().join("clusters/labels.csv"));
    for row in &label_rows {
        *label_counts.entry(row[1].clone()).or_insert(0usize) += 1;
    }
    let mut scaled_total = 0.0;
    for row in &profile_rows {
        for (id, cell) in profile_ids.iter().zip(row) {
            scaled_total += cell.parse::<f64>().unwrap() * label_counts[id] as f64;
        }
    }
    let (_, demand_rows) = read_csv(&dir.path().join("demand.csv"));
    let input_total: f64 = demand_rows
        .iter()
        .flat_map(|r| r.iter())
        .map(|c| c.parse::<f64>().unwrap())
        .sum();
    assert!(
        ((scaled_total - input_total) / input_total).abs() <= 1e-9,
        "class profiles total {scaled_total}, input total {input_total}"
    );
}

#[test]
fn size_sweep_writes_reports_and_charts() {
    let dir = workspace();
    let output = run(dir.path(), &["sweep-size", "--out-dir", "results", "--seed", "0"]);
    let text = stdout(&output);
    for file in [
        "size_sweep_allocations.csv",
        "size_sweep_relative_differences.csv",
        "size_sweep_summary.csv",
        "size_sweep_timings.csv",
        "size_sweep_avg_rd.svg",
        "size_sweep_exact_allocations.svg",
    ] {
        let path = dir.path().join("results").join(file);
        assert!(path.exists(), "missing {}", path.display());
        assert!(text.contains(file), "stdout does not mention {file}");
    }
    let (header, rows) = read_csv(&dir.path().join("results/size_sweep_summary.csv"));
    assert_eq!(header[0], "scenario");
    assert!(rows.iter().all(|r| r[1] == "N=10" || r[1] == "N=20"));
    // two sizes x (exact + the two configured approximations)
    assert_eq!(rows.len(), 6);
}
