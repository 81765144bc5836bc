//! Demand and generation time series: CSV ingestion, gap repair,
//! aggregation, and the wind-speed-to-power conversion.
//!
//! Demand CSVs are column-per-agent: the header row carries agent ids and
//! each subsequent row is one timestep. Missing readings are empty cells;
//! the strict loader rejects them while [`load_demand_csv_lenient`] keeps
//! them as gaps for coverage filtering and interpolation.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

/// Errors raised while loading or transforming time series.
#[derive(Debug, Error)]
pub enum TimeseriesError {
    #[error("cannot read {path}: {source}")]
    MissingFile {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("agent {agent} has negative demand {value} at step {step}")]
    NegativeDemand {
        agent: String,
        step: usize,
        value: f64,
    },
    #[error("series length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("gap at series boundary (step {step}) cannot be interpolated")]
    BoundaryGap { step: usize },
    #[error("member index {index} out of range for {n_agents} agents")]
    IndexOutOfRange { index: usize, n_agents: usize },
    #[error("power curve needs at least one knot with strictly increasing speeds")]
    EmptyCurve,
    #[error("non-finite value for agent {agent} at step {step}")]
    NonFinite { agent: String, step: usize },
}

/// Per-agent demand series, kW, one row per agent.
///
/// Invariants: every row has the same length and every value is finite and
/// non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandMatrix {
    agent_ids: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl DemandMatrix {
    /// Builds a matrix from per-agent rows, validating the invariants.
    pub fn new(agent_ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, TimeseriesError> {
        assert_eq!(agent_ids.len(), rows.len(), "one id per row");
        let t = rows.first().map(Vec::len).unwrap_or(0);
        for (id, row) in agent_ids.iter().zip(&rows) {
            if row.len() != t {
                return Err(TimeseriesError::LengthMismatch {
                    expected: t,
                    got: row.len(),
                });
            }
            for (step, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(TimeseriesError::NonFinite {
                        agent: id.clone(),
                        step,
                    });
                }
                if v < 0.0 {
                    return Err(TimeseriesError::NegativeDemand {
                        agent: id.clone(),
                        step,
                        value: v,
                    });
                }
            }
        }
        Ok(Self { agent_ids, rows })
    }

    pub fn n_agents(&self) -> usize {
        self.rows.len()
    }

    /// Number of timesteps per agent.
    pub fn timesteps(&self) -> usize {
        self.rows.first().map(Vec::len).unwrap_or(0)
    }

    pub fn agent_ids(&self) -> &[String] {
        &self.agent_ids
    }

    pub fn row(&self, agent: usize) -> &[f64] {
        &self.rows[agent]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Demand table that still contains gaps (`None` cells), produced by the
/// lenient loader. Feed it through [`RawDemandTable::drop_low_coverage`] and
/// [`RawDemandTable::interpolate`] to obtain a [`DemandMatrix`].
#[derive(Debug, Clone)]
pub struct RawDemandTable {
    pub agent_ids: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl RawDemandTable {
    /// Fraction of present (non-gap) cells for one agent.
    pub fn coverage(&self, agent: usize) -> f64 {
        let row = &self.cells[agent];
        if row.is_empty() {
            return 0.0;
        }
        row.iter().filter(|c| c.is_some()).count() as f64 / row.len() as f64
    }

    /// Drops agents whose coverage is below `min_coverage` (e.g. `0.95`).
    pub fn drop_low_coverage(self, min_coverage: f64) -> Self {
        let mut agent_ids = Vec::new();
        let mut cells = Vec::new();
        for (id, row) in self.agent_ids.into_iter().zip(self.cells) {
            let present = row.iter().filter(|c| c.is_some()).count();
            if !row.is_empty() && present as f64 / row.len() as f64 >= min_coverage {
                agent_ids.push(id);
                cells.push(row);
            }
        }
        Self { agent_ids, cells }
    }

    /// Fills every remaining gap by linear interpolation and validates the
    /// result into a [`DemandMatrix`].
    pub fn interpolate(self) -> Result<DemandMatrix, TimeseriesError> {
        let mut rows = Vec::with_capacity(self.cells.len());
        for row in &self.cells {
            rows.push(interpolate_missing(row)?);
        }
        DemandMatrix::new(self.agent_ids, rows)
    }
}

/// Wind generation series, kW at every timestep.
///
/// Invariant: values are finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationSeries {
    kw: Vec<f64>,
}

impl GenerationSeries {
    pub fn new(kw: Vec<f64>) -> Result<Self, TimeseriesError> {
        for (step, &v) in kw.iter().enumerate() {
            if !v.is_finite() {
                return Err(TimeseriesError::NonFinite {
                    agent: "generation".into(),
                    step,
                });
            }
            if v < 0.0 {
                return Err(TimeseriesError::NegativeDemand {
                    agent: "generation".into(),
                    step,
                    value: v,
                });
            }
        }
        Ok(Self { kw })
    }

    pub fn kw(&self) -> &[f64] {
        &self.kw
    }

    pub fn len(&self) -> usize {
        self.kw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kw.is_empty()
    }
}

/// Piecewise-linear turbine power curve mapping wind speed (m/s) to output
/// power (kW). Queries outside the knot range clamp to zero, which models
/// both cut-in and cut-out behaviour.
#[derive(Debug, Clone)]
pub struct PowerCurve {
    knots: Vec<(f64, f64)>,
}

impl PowerCurve {
    /// Builds a curve from `(speed_ms, power_kw)` knots; speeds must be
    /// strictly increasing and powers non-negative.
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self, TimeseriesError> {
        if knots.is_empty() {
            return Err(TimeseriesError::EmptyCurve);
        }
        for pair in knots.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(TimeseriesError::EmptyCurve);
            }
        }
        if knots.iter().any(|&(s, p)| !s.is_finite() || !(p >= 0.0)) {
            return Err(TimeseriesError::EmptyCurve);
        }
        Ok(Self { knots })
    }

    /// Output power (kW) at one wind speed.
    pub fn power_at(&self, speed_ms: f64) -> f64 {
        let first = self.knots[0];
        let last = self.knots[self.knots.len() - 1];
        if speed_ms < first.0 || speed_ms > last.0 {
            return 0.0;
        }
        for pair in self.knots.windows(2) {
            let (s0, p0) = pair[0];
            let (s1, p1) = pair[1];
            if speed_ms <= s1 {
                return p0 + (p1 - p0) * (speed_ms - s0) / (s1 - s0);
            }
        }
        last.1
    }
}

/// Strictly loads a column-per-agent demand CSV. The header row carries
/// agent ids; every cell must hold a finite, non-negative number (no gaps).
pub fn load_demand_csv(path: &Path) -> Result<DemandMatrix, TimeseriesError> {
    let table = load_demand_csv_lenient(path)?;
    for (agent, row) in table.cells.iter().enumerate() {
        if let Some(step) = row.iter().position(|c| c.is_none()) {
            return Err(TimeseriesError::MalformedRow {
                row: step + 2,
                reason: format!("empty cell for agent {}", table.agent_ids[agent]),
            });
        }
    }
    table.interpolate()
}

/// Loads a demand CSV keeping empty cells as gaps.
pub fn load_demand_csv_lenient(path: &Path) -> Result<RawDemandTable, TimeseriesError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| map_csv_open_error(path, e))?;
    let agent_ids: Vec<String> = reader
        .headers()
        .map_err(|e| TimeseriesError::MalformedRow {
            row: 1,
            reason: e.to_string(),
        })?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut cells: Vec<Vec<Option<f64>>> = vec![Vec::new(); agent_ids.len()];
    for (idx, record) in reader.records().enumerate() {
        let row_no = idx + 2; // 1-based, after the header
        let record = record.map_err(|e| TimeseriesError::MalformedRow {
            row: row_no,
            reason: e.to_string(),
        })?;
        if record.len() != agent_ids.len() {
            return Err(TimeseriesError::MalformedRow {
                row: row_no,
                reason: format!("expected {} fields, got {}", agent_ids.len(), record.len()),
            });
        }
        for (agent, field) in record.iter().enumerate() {
            if field.is_empty() {
                cells[agent].push(None);
                continue;
            }
            let value: f64 = field.parse().map_err(|_| TimeseriesError::MalformedRow {
                row: row_no,
                reason: format!("cannot parse {field:?} as a number"),
            })?;
            cells[agent].push(Some(value));
        }
    }
    Ok(RawDemandTable { agent_ids, cells })
}

/// Writes a demand matrix back to the column-per-agent CSV layout. Values
/// use Rust's shortest round-trip float formatting, so a load of the written
/// file reproduces every bit.
pub fn write_demand_csv(path: &Path, matrix: &DemandMatrix) -> Result<(), TimeseriesError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| {
        TimeseriesError::MissingFile {
            path: path.display().to_string(),
            source: e,
        }
    })?);
    let io_err = |e: std::io::Error| TimeseriesError::MissingFile {
        path: path.display().to_string(),
        source: e,
    };
    writeln!(out, "{}", matrix.agent_ids().join(",")).map_err(io_err)?;
    for t in 0..matrix.timesteps() {
        let mut line = String::new();
        for agent in 0..matrix.n_agents() {
            if agent > 0 {
                line.push(',');
            }
            line.push_str(&matrix.row(agent)[t].to_string());
        }
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Loads a single-column generation CSV (header `generation_kw`).
pub fn load_generation_csv(path: &Path) -> Result<GenerationSeries, TimeseriesError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| map_csv_open_error(path, e))?;
    let mut kw = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row_no = idx + 2;
        let record = record.map_err(|e| TimeseriesError::MalformedRow {
            row: row_no,
            reason: e.to_string(),
        })?;
        let field = record.get(0).unwrap_or("");
        let value: f64 = field.parse().map_err(|_| TimeseriesError::MalformedRow {
            row: row_no,
            reason: format!("cannot parse {field:?} as a number"),
        })?;
        kw.push(value);
    }
    GenerationSeries::new(kw)
}

/// Loads a power curve CSV (`wind_speed_ms,power_kw`).
pub fn load_power_curve_csv(path: &Path) -> Result<PowerCurve, TimeseriesError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| map_csv_open_error(path, e))?;
    let mut knots = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row_no = idx + 2;
        let record = record.map_err(|e| TimeseriesError::MalformedRow {
            row: row_no,
            reason: e.to_string(),
        })?;
        let parse = |i: usize| -> Result<f64, TimeseriesError> {
            let field = record.get(i).unwrap_or("");
            field.parse().map_err(|_| TimeseriesError::MalformedRow {
                row: row_no,
                reason: format!("cannot parse {field:?} as a number"),
            })
        };
        knots.push((parse(0)?, parse(1)?));
    }
    PowerCurve::new(knots)
}

/// Loads a single-column wind speed CSV (header `wind_speed_ms`).
pub fn load_wind_speed_csv(path: &Path) -> Result<Vec<f64>, TimeseriesError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| map_csv_open_error(path, e))?;
    let mut speeds = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row_no = idx + 2;
        let record = record.map_err(|e| TimeseriesError::MalformedRow {
            row: row_no,
            reason: e.to_string(),
        })?;
        let field = record.get(0).unwrap_or("");
        let value: f64 = field.parse().map_err(|_| TimeseriesError::MalformedRow {
            row: row_no,
            reason: format!("cannot parse {field:?} as a number"),
        })?;
        speeds.push(value);
    }
    Ok(speeds)
}

fn map_csv_open_error(path: &Path, e: csv::Error) -> TimeseriesError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => TimeseriesError::MissingFile {
            path: path.display().to_string(),
            source,
        },
        other => TimeseriesError::MalformedRow {
            row: 0,
            reason: format!("{other:?}"),
        },
    }
}

/// Fills gaps (`None`) by linear interpolation between the nearest present
/// neighbours. Gaps touching either boundary are an error because there is
/// no anchor to interpolate from.
pub fn interpolate_missing(series: &[Option<f64>]) -> Result<Vec<f64>, TimeseriesError> {
    if series.first().is_some_and(Option::is_none) {
        return Err(TimeseriesError::BoundaryGap { step: 0 });
    }
    if series.last().is_some_and(Option::is_none) {
        return Err(TimeseriesError::BoundaryGap {
            step: series.len() - 1,
        });
    }
    let mut out = Vec::with_capacity(series.len());
    let mut i = 0;
    while i < series.len() {
        match series[i] {
            Some(v) => {
                out.push(v);
                i += 1;
            }
            None => {
                // `series[i - 1]` is present (boundary gaps were rejected);
                // find the next present value and fill linearly.
                let left = out[i - 1];
                let mut j = i;
                while series[j].is_none() {
                    j += 1;
                }
                let right = series[j].unwrap();
                let span = (j - (i - 1)) as f64;
                for step in i..j {
                    let frac = (step - (i - 1)) as f64 / span;
                    out.push(left + (right - left) * frac);
                }
                i = j;
            }
        }
    }
    Ok(out)
}

/// Sums the demand rows of `members` (indices into the matrix), in member
/// order, producing the coalition's aggregate demand series.
pub fn aggregate_demand(
    matrix: &DemandMatrix,
    members: &[usize],
) -> Result<Vec<f64>, TimeseriesError> {
    let mut out = vec![0.0; matrix.timesteps()];
    for &m in members {
        if m >= matrix.n_agents() {
            return Err(TimeseriesError::IndexOutOfRange {
                index: m,
                n_agents: matrix.n_agents(),
            });
        }
        for (acc, v) in out.iter_mut().zip(matrix.row(m)) {
            *acc += v;
        }
    }
    Ok(out)
}

/// Converts a wind speed series to generation through the power curve and
/// multiplies by `scale` (e.g. turbine share per community).
pub fn wind_power_from_speed(
    speeds_ms: &[f64],
    curve: &PowerCurve,
    scale: f64,
) -> Result<GenerationSeries, TimeseriesError> {
    GenerationSeries::new(
        speeds_ms
            .iter()
            .map(|&v| scale * curve.power_at(v))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> DemandMatrix {
        DemandMatrix::new(
            (0..rows.len()).map(|i| format!("a{i}")).collect(),
            rows.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn interpolate_fills_single_gap() {
        let out = interpolate_missing(&[Some(2.0), None, Some(4.0)]).unwrap();
        assert_eq!(out, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn interpolate_fills_run_of_gaps() {
        let out = interpolate_missing(&[Some(1.0), None, None, Some(4.0)]).unwrap();
        assert_eq!(out, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn interpolate_rejects_boundary_gaps() {
        assert!(matches!(
            interpolate_missing(&[None, Some(1.0)]),
            Err(TimeseriesError::BoundaryGap { step: 0 })
        ));
        assert!(matches!(
            interpolate_missing(&[Some(1.0), None]),
            Err(TimeseriesError::BoundaryGap { step: 1 })
        ));
    }

    #[test]
    fn aggregate_sums_selected_rows() {
        let m = matrix(&[&[1.0, 2.0], &[10.0, 20.0], &[100.0, 200.0]]);
        assert_eq!(aggregate_demand(&m, &[0, 2]).unwrap(), vec![101.0, 202.0]);
        assert_eq!(aggregate_demand(&m, &[]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(
            aggregate_demand(&m, &[3]),
            Err(TimeseriesError::IndexOutOfRange { index: 3, .. })
        ));
    }

    #[test]
    fn aggregate_is_additive_over_disjoint_member_sets() {
        let m = matrix(&[&[1.5, 2.0], &[0.25, 4.0], &[3.0, 0.5], &[2.0, 1.0]]);
        let left = aggregate_demand(&m, &[0, 2]).unwrap();
        let right = aggregate_demand(&m, &[1, 3]).unwrap();
        let all = aggregate_demand(&m, &[0, 2, 1, 3]).unwrap();
        for t in 0..2 {
            assert!((left[t] + right[t] - all[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_demand_is_rejected() {
        let err = DemandMatrix::new(vec!["a".into()], vec![vec![1.0, -0.5]]).unwrap_err();
        assert!(matches!(
            err,
            TimeseriesError::NegativeDemand { step: 1, .. }
        ));
    }

    #[test]
    fn power_curve_interpolates_and_clamps() {
        let curve = PowerCurve::new(vec![(3.0, 0.0), (13.0, 330.0), (25.0, 330.0)]).unwrap();
        assert_eq!(curve.power_at(2.9), 0.0);
        assert_eq!(curve.power_at(25.1), 0.0);
        assert_eq!(curve.power_at(13.0), 330.0);
        assert_eq!(curve.power_at(25.0), 330.0);
        assert!((curve.power_at(8.0) - 165.0).abs() < 1e-12);
    }

    #[test]
    fn power_curve_rejects_unsorted_knots() {
        assert!(PowerCurve::new(vec![(5.0, 1.0), (5.0, 2.0)]).is_err());
        assert!(PowerCurve::new(vec![]).is_err());
    }

    #[test]
    fn wind_power_applies_scale() {
        let curve = PowerCurve::new(vec![(0.0, 0.0), (10.0, 100.0)]).unwrap();
        let gen = wind_power_from_speed(&[5.0, 10.0, 20.0], &curve, 0.006).unwrap();
        assert_eq!(gen.kw(), &[0.3, 0.6, 0.0]);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demand.csv");
        let m = matrix(&[
            &[0.1, 0.2, 1.0 / 3.0],
            &[17520.5, 1e-12, 2.0f64.powi(-40)],
        ]);
        write_demand_csv(&path, &m).unwrap();
        let loaded = load_demand_csv(&path).unwrap();
        for agent in 0..2 {
            for t in 0..3 {
                assert_eq!(
                    loaded.row(agent)[t].to_bits(),
                    m.row(agent)[t].to_bits(),
                    "agent {agent} step {t}"
                );
            }
        }
    }

    #[test]
    fn strict_loader_rejects_gaps_lenient_keeps_them() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gappy.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "a,b").unwrap();
        writeln!(f, "1.0,2.0").unwrap();
        writeln!(f, ",3.0").unwrap();
        writeln!(f, "2.0,4.0").unwrap();
        drop(f);

        assert!(matches!(
            load_demand_csv(&path),
            Err(TimeseriesError::MalformedRow { row: 3, .. })
        ));

        let raw = load_demand_csv_lenient(&path).unwrap();
        assert_eq!(raw.coverage(0), 2.0 / 3.0);
        assert_eq!(raw.coverage(1), 1.0);
        let kept = raw.drop_low_coverage(0.95);
        assert_eq!(kept.agent_ids, vec!["b".to_string()]);
        let m = kept.interpolate().unwrap();
        assert_eq!(m.row(0), &[2.0, 3.0, 4.0]);
    }

    #[test]
    fn missing_file_is_reported() {
        assert!(matches!(
            load_demand_csv(Path::new("/nonexistent/file.csv")),
            Err(TimeseriesError::MissingFile { .. })
        ));
    }
}
