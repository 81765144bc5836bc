//! Battery wear from cycle counting.
//!
//! The state-of-charge path (in percent of the usable maximum) is reduced to
//! reversal points and decomposed into full and half cycles by rainflow
//! counting. The path is first segmented at every exact full-charge touch
//! (100%), so each excursion away from full charge closes independently:
//! splitting a trace at such a touch and summing the two wear factors gives
//! exactly the wear of the whole trace. Within a segment the standard
//! four-point rule extracts nested full cycles, an excursion that returns
//! exactly to its starting level closes as one full cycle, and any leftover
//! tail counts as half cycles.
//!
//! A cycle starting from full charge is *regular* and consumes life from
//! the cycle-life table at its depth of discharge. Any other cycle is
//! *irregular* and consumes the difference in reciprocal life between its
//! endpoint depths, so shallow wiggles at high charge cost almost nothing.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DegradationError {
    #[error("cycle-life table needs at least one knot with strictly increasing DoD")]
    EmptyTable,
    #[error("cycle-life table has non-positive cycle count at DoD {dod}%")]
    NonPositiveCycles { dod: f64 },
    #[error("state of charge {value}% at reversal {index} outside [0, 100]")]
    SocOutOfRange { index: usize, value: f64 },
    #[error("cannot read {path}: {source}")]
    MissingFile {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed row {row} in cycle-life table: {reason}")]
    MalformedRow { row: usize, reason: String },
}

/// Full cycles return to their starting level; half cycles are a single
/// charge or discharge leg.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleKind {
    Full,
    Half,
}

/// One counted cycle, endpoints in percent of the usable SoC maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cycle {
    pub kind: CycleKind,
    pub soc_start_percent: f64,
    pub soc_end_percent: f64,
}

impl Cycle {
    fn full(start: f64, end: f64) -> Self {
        Self {
            kind: CycleKind::Full,
            soc_start_percent: start,
            soc_end_percent: end,
        }
    }

    fn half(start: f64, end: f64) -> Self {
        Self {
            kind: CycleKind::Half,
            soc_start_percent: start,
            soc_end_percent: end,
        }
    }

    /// Depth of discharge spanned by the cycle (percentage points).
    pub fn dod_percent(&self) -> f64 {
        (self.soc_start_percent - self.soc_end_percent).abs()
    }

    /// Regular cycles start exactly at full charge.
    pub fn is_regular(&self) -> bool {
        self.soc_start_percent == 100.0
    }

    /// Cycle count weight: 1 for full cycles, 1/2 for halves.
    pub fn count(&self) -> f64 {
        match self.kind {
            CycleKind::Full => 1.0,
            CycleKind::Half => 0.5,
        }
    }
}

/// Cycle life versus depth of discharge: `(dod_percent, max_cycles)` knots
/// with strictly increasing DoD. Queries interpolate linearly and clamp to
/// the boundary knots outside the tabulated range.
#[derive(Debug, Clone)]
pub struct CycleLifeTable {
    knots: Vec<(f64, f64)>,
}

impl CycleLifeTable {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self, DegradationError> {
        if knots.is_empty() {
            return Err(DegradationError::EmptyTable);
        }
        for pair in knots.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(DegradationError::EmptyTable);
            }
        }
        if let Some(&(dod, _)) = knots.iter().find(|&&(_, n)| !(n > 0.0)) {
            return Err(DegradationError::NonPositiveCycles { dod });
        }
        Ok(Self { knots })
    }

    /// Lithium-ion-like default: cycle life inversely proportional to depth
    /// of discharge, 300 full cycles at 100% DoD scaling up to 30,000 at 1%,
    /// clamped below 1% DoD. Used when no measured table is supplied.
    pub fn synthetic_default() -> Self {
        let mut knots = vec![(1.0, 30_000.0)];
        for dod in (5..=100).step_by(5) {
            knots.push((dod as f64, 30_000.0 / dod as f64));
        }
        Self::new(knots).expect("synthetic table is well formed")
    }

    /// Loads a `dod_percent,max_cycles` CSV.
    pub fn from_csv(path: &Path) -> Result<Self, DegradationError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(source) => DegradationError::MissingFile {
                    path: path.display().to_string(),
                    source,
                },
                other => DegradationError::MalformedRow {
                    row: 0,
                    reason: format!("{other:?}"),
                },
            })?;
        let mut knots = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let row_no = idx + 2;
            let record = record.map_err(|e| DegradationError::MalformedRow {
                row: row_no,
                reason: e.to_string(),
            })?;
            let parse = |i: usize| -> Result<f64, DegradationError> {
                let field = record.get(i).unwrap_or("");
                field.parse().map_err(|_| DegradationError::MalformedRow {
                    row: row_no,
                    reason: format!("cannot parse {field:?} as a number"),
                })
            };
            knots.push((parse(0)?, parse(1)?));
        }
        Self::new(knots)
    }

    /// Maximum cycle count at a depth of discharge (linear interpolation,
    /// clamped at the boundary knots).
    pub fn max_cycles_at(&self, dod_percent: f64) -> f64 {
        let first = self.knots[0];
        let last = self.knots[self.knots.len() - 1];
        if dod_percent <= first.0 {
            return first.1;
        }
        if dod_percent >= last.0 {
            return last.1;
        }
        for pair in self.knots.windows(2) {
            let (d0, n0) = pair[0];
            let (d1, n1) = pair[1];
            if dod_percent <= d1 {
                return n0 + (n1 - n0) * (dod_percent - d0) / (d1 - d0);
            }
        }
        last.1
    }
}

/// Depth of discharge (percentage points) equivalent to a state of charge
/// given in percent of the usable maximum.
pub fn dod_equivalent(soc_percent: f64) -> f64 {
    100.0 - soc_percent
}

/// Collapses repeats and keeps turning points (plus both endpoints).
fn reversals(series: &[f64]) -> Vec<f64> {
    let mut pts: Vec<f64> = Vec::with_capacity(series.len());
    for &v in series {
        if pts.last() != Some(&v) {
            pts.push(v);
        }
    }
    if pts.len() <= 2 {
        return pts;
    }
    let mut out = vec![pts[0]];
    for i in 1..pts.len() - 1 {
        let prev = *out.last().expect("seeded with the first point");
        if (pts[i] - prev) * (pts[i + 1] - pts[i]) < 0.0 {
            out.push(pts[i]);
        }
    }
    out.push(*pts.last().expect("len checked above"));
    out
}

/// Four-point rainflow over one segment of the reversal sequence, then a
/// closure pass for an excursion returning exactly to its starting level,
/// then half cycles for the open remainder.
fn count_segment(segment: &[f64], cycles: &mut Vec<Cycle>) {
    if segment.len() < 2 {
        return;
    }
    let mut stack: Vec<f64> = Vec::with_capacity(segment.len());
    for &point in segment {
        stack.push(point);
        while stack.len() >= 4 {
            let n = stack.len();
            let (a, b, c, d) = (stack[n - 4], stack[n - 3], stack[n - 2], stack[n - 1]);
            let inner = (c - b).abs();
            if inner <= (b - a).abs() && inner <= (d - c).abs() {
                cycles.push(Cycle::full(b, c));
                stack.remove(n - 3);
                stack.remove(n - 3);
            } else {
                break;
            }
        }
    }
    if stack.len() == 3 && stack[0] == stack[2] {
        cycles.push(Cycle::full(stack[0], stack[1]));
        stack.truncate(1);
    }
    for pair in stack.windows(2) {
        cycles.push(Cycle::half(pair[0], pair[1]));
    }
}

/// Decomposes a state-of-charge path (percent of usable maximum, so full
/// charge is exactly 100) into full and half cycles.
pub fn rainflow_count(soc_percent: &[f64]) -> Result<Vec<Cycle>, DegradationError> {
    if let Some((index, &value)) = soc_percent
        .iter()
        .enumerate()
        .find(|&(_, &v)| !(0.0..=100.0).contains(&v))
    {
        return Err(DegradationError::SocOutOfRange { index, value });
    }
    let revs = reversals(soc_percent);
    let mut cycles = Vec::new();
    let mut segment_start = 0;
    for idx in 0..revs.len() {
        if revs[idx] == 100.0 && idx > segment_start {
            count_segment(&revs[segment_start..=idx], &mut cycles);
            segment_start = idx;
        }
    }
    if segment_start + 1 < revs.len() {
        count_segment(&revs[segment_start..], &mut cycles);
    }
    Ok(cycles)
}

/// Annualized wear factor: the fraction of total battery life consumed by
/// the counted cycles. Regular cycles draw down life at their depth of
/// discharge; irregular cycles pay the difference in reciprocal life
/// between their endpoint depths.
pub fn depreciation_factor(cycles: &[Cycle], table: &CycleLifeTable) -> f64 {
    let mut df = 0.0;
    for cycle in cycles {
        if cycle.is_regular() {
            df += cycle.count() / table.max_cycles_at(cycle.dod_percent());
        } else {
            let start = 1.0 / table.max_cycles_at(dod_equivalent(cycle.soc_start_percent));
            let end = 1.0 / table.max_cycles_at(dod_equivalent(cycle.soc_end_percent));
            df += cycle.count() * (start - end).abs();
        }
    }
    df
}
