//! Consumer demand profiles: normalization, winter-weekday filtering,
//! k-means clustering into consumption classes, and synthetic community
//! generation from built-in daily archetypes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::DemandMatrix;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("no rows to process")]
    NoRows,
    #[error("rows have differing lengths")]
    RaggedRows,
    #[error("agent {agent} has an all-zero profile and cannot be normalized")]
    ZeroNorm { agent: usize },
    #[error("row length {len} is not a whole number of {steps_per_day}-step days")]
    PartialDay { len: usize, steps_per_day: usize },
    #[error("calendar start {month}-{day} is not a valid date")]
    BadDate { month: u32, day: u32 },
    #[error("weekday {weekday} is out of range 0..=6")]
    BadWeekday { weekday: u32 },
    #[error("cannot form {k} clusters from {points} points")]
    TooFewPoints { points: usize, k: usize },
    #[error("class shapes and sizes are empty or of mismatched lengths")]
    BadClassShapes,
    #[error("class shapes sum to zero; nothing to scale")]
    DegenerateShapes,
    #[error("weights have no positive entries")]
    DegenerateWeights,
}

/// Scales every row to unit Euclidean norm. All-zero rows carry no
/// consumption pattern and are rejected.
pub fn l2_normalize(rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ProfileError> {
    rows.iter()
        .enumerate()
        .map(|(agent, row)| {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(ProfileError::ZeroNorm { agent });
            }
            Ok(row.iter().map(|v| v / norm).collect())
        })
        .collect()
}

const MONTH_LENGTHS: [u32; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

/// Maps sample indices to calendar dates for day filtering. Years are
/// treated as non-leap and wrap around after December 31.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalendarConfig {
    /// Month of the first sample, 1..=12.
    pub start_month: u32,
    /// Day of month of the first sample, 1..=31.
    pub start_day: u32,
    /// Weekday of the first sample, 0 = Monday .. 6 = Sunday.
    pub start_weekday: u32,
    /// Samples per day (half-hourly data has 48).
    pub steps_per_day: usize,
}

impl Default for CalendarConfig {
    fn default() -> Self {
        Self {
            start_month: 1,
            start_day: 1,
            start_weekday: 0,
            steps_per_day: 48,
        }
    }
}

impl CalendarConfig {
    fn validate(&self) -> Result<(), ProfileError> {
        let month_ok = (1..=12).contains(&self.start_month);
        if !month_ok || !(1..=MONTH_LENGTHS[(self.start_month - 1) as usize]).contains(&self.start_day)
        {
            return Err(ProfileError::BadDate {
                month: self.start_month,
                day: self.start_day,
            });
        }
        if self.start_weekday > 6 {
            return Err(ProfileError::BadWeekday {
                weekday: self.start_weekday,
            });
        }
        Ok(())
    }
}

/// Keeps winter working days: November through February, minus the
/// holiday windows January 1-6 and December 22-31, Monday through
/// Thursday only. Returns the filtered rows (kept days concatenated in
/// order) and the kept day indices.
pub fn filter_winter_weekdays(
    rows: &[Vec<f64>],
    calendar: &CalendarConfig,
) -> Result<(Vec<Vec<f64>>, Vec<usize>), ProfileError> {
    calendar.validate()?;
    if rows.is_empty() {
        return Err(ProfileError::NoRows);
    }
    let len = rows[0].len();
    if rows.iter().any(|r| r.len() != len) {
        return Err(ProfileError::RaggedRows);
    }
    let steps = calendar.steps_per_day;
    if steps == 0 || len % steps != 0 {
        return Err(ProfileError::PartialDay {
            len,
            steps_per_day: steps,
        });
    }

    let mut kept_days = Vec::new();
    let (mut month, mut day, mut weekday) = (
        calendar.start_month,
        calendar.start_day,
        calendar.start_weekday,
    );
    for d in 0..len / steps {
        let winter = matches!(month, 1 | 2 | 11 | 12);
        let holiday = (month == 1 && day <= 6) || (month == 12 && day >= 22);
        let working = weekday <= 3;
        if winter && !holiday && working {
            kept_days.push(d);
        }
        weekday = (weekday + 1) % 7;
        day += 1;
        if day > MONTH_LENGTHS[(month - 1) as usize] {
            day = 1;
            month = month % 12 + 1;
        }
    }

    let filtered = rows
        .iter()
        .map(|row| {
            let mut out = Vec::with_capacity(kept_days.len() * steps);
            for &d in &kept_days {
                out.extend_from_slice(&row[d * steps..(d + 1) * steps]);
            }
            out
        })
        .collect();
    Ok((filtered, kept_days))
}

/// Collapses whole-day blocks into one average day per agent.
pub fn mean_day(rows: &[Vec<f64>], steps_per_day: usize) -> Result<Vec<Vec<f64>>, ProfileError> {
    if rows.is_empty() {
        return Err(ProfileError::NoRows);
    }
    let len = rows[0].len();
    if rows.iter().any(|r| r.len() != len) {
        return Err(ProfileError::RaggedRows);
    }
    if steps_per_day == 0 || len % steps_per_day != 0 || len == 0 {
        return Err(ProfileError::PartialDay {
            len,
            steps_per_day,
        });
    }
    let days = len / steps_per_day;
    Ok(rows
        .iter()
        .map(|row| {
            let mut out = vec![0.0; steps_per_day];
            for chunk in row.chunks_exact(steps_per_day) {
                for (acc, v) in out.iter_mut().zip(chunk) {
                    *acc += v;
                }
            }
            for v in out.iter_mut() {
                *v /= days as f64;
            }
            out
        })
        .collect())
}

/// Fitted k-means model.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    /// One centroid per cluster.
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index per input point.
    pub labels: Vec<usize>,
    /// Sum of squared distances of points to their centroids.
    pub inertia: f64,
    /// Lloyd iterations until the assignment stopped changing.
    pub iterations: usize,
}

impl ClusterModel {
    /// Number of points per cluster.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, best_d)
}

/// Seeded k-means: spread-out initial centroids (distance-weighted
/// seeding), then Lloyd iterations until the assignment reaches a
/// fixpoint or `max_iter` passes. Deterministic for a fixed seed; ties go
/// to the lowest index. Clusters that empty out are reseeded with the
/// point farthest from its assigned centroid.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<ClusterModel, ProfileError> {
    if points.is_empty() {
        return Err(ProfileError::NoRows);
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(ProfileError::RaggedRows);
    }
    if k == 0 || k > points.len() {
        return Err(ProfileError::TooFewPoints {
            points: points.len(),
            k,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].clone());
    let mut dist2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = dist2.iter().sum();
        let next = if total > 0.0 {
            // Draw an index with probability proportional to its squared
            // distance from the chosen centroids.
            let mut u = rng.gen::<f64>() * total;
            let mut pick = dist2.len() - 1;
            for (i, &d) in dist2.iter().enumerate() {
                u -= d;
                if u <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.gen_range(0..points.len())
        };
        centroids.push(points[next].clone());
        for (d, p) in dist2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, centroids.last().unwrap()));
        }
    }

    let mut labels = vec![0usize; points.len()];
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let mut changed = false;
        for (label, point) in labels.iter_mut().zip(points) {
            let (j, _) = nearest_centroid(point, &centroids);
            if *label != j {
                *label = j;
                changed = true;
            }
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&label, point) in labels.iter().zip(points) {
            counts[label] += 1;
            for (acc, v) in sums[label].iter_mut().zip(point) {
                *acc += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Reseed with the point farthest from its centroid.
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = squared_distance(&points[a], &centroids[labels[a]]);
                        let db = squared_distance(&points[b], &centroids[labels[b]]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                centroids[j] = points[far].clone();
                labels[far] = j;
                changed = true;
            } else {
                for (c, s) in centroids[j].iter_mut().zip(&sums[j]) {
                    *c = s / counts[j] as f64;
                }
            }
        }

        if !changed && iterations > 1 {
            break;
        }
    }

    let inertia = labels
        .iter()
        .zip(points)
        .map(|(&l, p)| squared_distance(p, &centroids[l]))
        .sum();
    Ok(ClusterModel {
        centroids,
        labels,
        inertia,
        iterations,
    })
}

/// Scales normalized per-class shapes so the summed readings of the whole
/// community hit `reference_total`, preserving the classes' relative
/// magnitudes: every shape is multiplied by the same factor
/// `reference_total / sum_q (size_q * sum_t shape_q(t))`.
pub fn synthesize_class_profiles(
    shapes: &[Vec<f64>],
    sizes: &[usize],
    reference_total: f64,
) -> Result<Vec<Vec<f64>>, ProfileError> {
    if shapes.is_empty() || shapes.len() != sizes.len() {
        return Err(ProfileError::BadClassShapes);
    }
    let len = shapes[0].len();
    if shapes.iter().any(|s| s.len() != len) {
        return Err(ProfileError::RaggedRows);
    }
    let denominator: f64 = shapes
        .iter()
        .zip(sizes)
        .map(|(shape, &n)| n as f64 * shape.iter().sum::<f64>())
        .sum();
    if denominator == 0.0 {
        return Err(ProfileError::DegenerateShapes);
    }
    let scale = reference_total / denominator;
    Ok(shapes
        .iter()
        .map(|shape| shape.iter().map(|v| v * scale).collect())
        .collect())
}

/// Splits `total` into integer parts proportional to `weights` (largest
/// remainder; ties to the lowest index). The parts always sum to `total`.
pub fn apportion(weights: &[f64], total: usize) -> Result<Vec<usize>, ProfileError> {
    let sum: f64 = weights.iter().filter(|w| w.is_finite() && **w > 0.0).sum();
    if weights.is_empty() || sum <= 0.0 {
        return Err(ProfileError::DegenerateWeights);
    }
    let quotas: Vec<f64> = weights
        .iter()
        .map(|&w| if w > 0.0 { w / sum * total as f64 } else { 0.0 })
        .collect();
    let mut parts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut assigned: usize = parts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if assigned == total {
            break;
        }
        parts[i] += 1;
        assigned += 1;
    }
    Ok(parts)
}

/// Built-in synthetic consumption archetypes, each a 48-slot half-hourly
/// daily shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Archetype {
    /// Low daytime use with a strong evening peak.
    EveningPeak,
    /// Elevated, broad daytime consumption.
    StayAtHome,
    /// Morning and evening peaks of similar height.
    MShape,
    /// High overnight use, quiet during the day.
    NightOwl,
}

impl Archetype {
    pub const ALL: [Archetype; 4] = [
        Archetype::EveningPeak,
        Archetype::StayAtHome,
        Archetype::MShape,
        Archetype::NightOwl,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Archetype::EveningPeak => "evening_peak",
            Archetype::StayAtHome => "stay_at_home",
            Archetype::MShape => "m_shape",
            Archetype::NightOwl => "night_owl",
        }
    }

    /// Relative consumption weights for the 48 half-hours of a day.
    pub fn daily_shape(&self) -> Vec<f64> {
        // Smooth bumps centered on an hour of day, wrapping at midnight.
        let bump = |h: f64, center: f64, width: f64| -> f64 {
            let d = (h - center).abs();
            let d = d.min(24.0 - d);
            (-d * d / (2.0 * width * width)).exp()
        };
        (0..48)
            .map(|i| {
                let h = 0.25 + 0.5 * i as f64;
                match self {
                    Archetype::EveningPeak => {
                        0.12 + 0.25 * bump(h, 7.5, 1.2) + 1.0 * bump(h, 18.5, 1.8)
                    }
                    Archetype::StayAtHome => {
                        0.20 + 0.55 * bump(h, 13.0, 4.0) + 0.30 * bump(h, 18.5, 1.5)
                    }
                    Archetype::MShape => {
                        0.12 + 0.85 * bump(h, 7.8, 1.4) + 0.80 * bump(h, 18.2, 1.6)
                    }
                    Archetype::NightOwl => {
                        0.10 + 0.95 * bump(h, 1.5, 2.2) + 0.25 * bump(h, 21.5, 1.5)
                    }
                }
            })
            .collect()
    }
}

/// Repeats a daily shape across `timesteps` samples (the tail may be a
/// partial day).
pub fn tile_daily_shape(shape: &[f64], timesteps: usize) -> Vec<f64> {
    shape.iter().copied().cycle().take(timesteps).collect()
}

/// Configuration for [`generate_synthetic_community`].
#[derive(Debug, Clone)]
pub struct SyntheticCommunityConfig {
    pub n_agents: usize,
    pub timesteps: usize,
    /// Archetype mix; head counts come from largest-remainder rounding.
    pub mix: Vec<(Archetype, f64)>,
    /// Mean annual energy per agent (kWh over 8760 hours), pro-rated to
    /// the generated horizon.
    pub annual_kwh_mean: f64,
    /// Log-scale spread of per-agent annual energy (0 = identical sizes).
    pub sigma_scale: f64,
    /// Amplitude of multiplicative per-sample jitter (0 = clean tiles).
    pub noise: f64,
    /// Timestep length in hours.
    pub dt_h: f64,
    pub seed: u64,
}

impl Default for SyntheticCommunityConfig {
    fn default() -> Self {
        Self {
            n_agents: 200,
            timesteps: 17520,
            mix: vec![
                (Archetype::EveningPeak, 0.7),
                (Archetype::StayAtHome, 0.1),
                (Archetype::MShape, 0.1),
                (Archetype::NightOwl, 0.1),
            ],
            annual_kwh_mean: 3500.0,
            sigma_scale: 0.35,
            noise: 0.05,
            dt_h: 0.5,
            seed: 0,
        }
    }
}

/// Generates a synthetic community demand matrix plus the archetype label
/// of each agent. Agent `i` draws from RNG substream `i`, so the output
/// is deterministic for a fixed seed. With zero `sigma_scale` and zero
/// `noise`, agents of the same archetype get bit-identical rows.
pub fn generate_synthetic_community(
    config: &SyntheticCommunityConfig,
) -> Result<(DemandMatrix, Vec<usize>), ProfileError> {
    if config.n_agents == 0 || config.timesteps == 0 {
        return Err(ProfileError::NoRows);
    }
    let weights: Vec<f64> = config.mix.iter().map(|(_, w)| *w).collect();
    let counts = apportion(&weights, config.n_agents)?;

    let horizon_hours = config.timesteps as f64 * config.dt_h;
    let mean_energy_kwh = config.annual_kwh_mean * horizon_hours / 8760.0;

    let mut ids = Vec::with_capacity(config.n_agents);
    let mut rows = Vec::with_capacity(config.n_agents);
    let mut labels = Vec::with_capacity(config.n_agents);
    let mut agent = 0usize;
    for (class, (&(archetype, _), &count)) in config.mix.iter().zip(&counts).enumerate() {
        let base = tile_daily_shape(&archetype.daily_shape(), config.timesteps);
        for member in 0..count {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(agent as u64);

            let factor = if config.sigma_scale > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                (config.sigma_scale * z).exp()
            } else {
                1.0
            };
            let mut row = base.clone();
            if config.noise > 0.0 {
                for v in row.iter_mut() {
                    *v *= 1.0 + config.noise * (rng.gen::<f64>() * 2.0 - 1.0);
                }
            }
            let energy: f64 = row.iter().map(|v| v * config.dt_h).sum();
            let scale = mean_energy_kwh * factor / energy;
            for v in row.iter_mut() {
                *v *= scale;
            }

            ids.push(format!("{}_{member:03}", archetype.name()));
            rows.push(row);
            labels.push(class);
            agent += 1;
        }
    }

    let matrix = DemandMatrix::new(ids, rows).expect("generated rows are finite and rectangular");
    Ok((matrix, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_normalize_produces_unit_rows() {
        let rows = vec![vec![3.0, 4.0], vec![1.0, 0.0]];
        let normed = l2_normalize(&rows).unwrap();
        assert_eq!(normed[0], vec![0.6, 0.8]);
        assert_eq!(normed[1], vec![1.0, 0.0]);
        assert!(matches!(
            l2_normalize(&[vec![0.0, 0.0]]),
            Err(ProfileError::ZeroNorm { agent: 0 })
        ));
    }

    #[test]
    fn winter_weekday_filter_keeps_sixty_days_from_a_monday_start() {
        // One sample per day keeps the test small; the filter only cares
        // about whole day blocks.
        let rows = vec![(0..365).map(|d| d as f64).collect::<Vec<f64>>()];
        let calendar = CalendarConfig {
            steps_per_day: 1,
            ..CalendarConfig::default()
        };
        let (filtered, kept) = filter_winter_weekdays(&rows, &calendar).unwrap();
        assert_eq!(kept.len(), 60);
        assert_eq!(filtered[0].len(), 60);
        // Never the holiday windows: January 1-6 or December 22-31.
        assert!(kept.iter().all(|&d| d > 5 && !(355..=364).contains(&d)));
        // Never Friday through Sunday for a Monday start.
        assert!(kept.iter().all(|&d| d % 7 <= 3));
        // Nothing outside November through February.
        assert!(kept.iter().all(|&d| d <= 58 || d >= 304));
    }

    #[test]
    fn winter_weekday_filter_respects_the_start_date() {
        // Starting mid-June, the first kept day is in November.
        let rows = vec![vec![1.0; 200]];
        let calendar = CalendarConfig {
            start_month: 6,
            start_day: 15,
            start_weekday: 0,
            steps_per_day: 1,
        };
        let (_, kept) = filter_winter_weekdays(&rows, &calendar).unwrap();
        // June 15 to October 31 is 139 days, all dropped.
        assert!(kept[0] >= 139);
        assert!(!kept.is_empty());
    }

    #[test]
    fn filter_rejects_partial_days_and_bad_dates() {
        let rows = vec![vec![1.0; 47]];
        assert!(matches!(
            filter_winter_weekdays(&rows, &CalendarConfig::default()),
            Err(ProfileError::PartialDay { len: 47, .. })
        ));
        let bad = CalendarConfig {
            start_month: 2,
            start_day: 30,
            ..CalendarConfig::default()
        };
        assert!(matches!(
            filter_winter_weekdays(&[vec![1.0; 48]], &bad),
            Err(ProfileError::BadDate { .. })
        ));
    }

    #[test]
    fn mean_day_averages_blocks() {
        let rows = vec![vec![1.0, 2.0, 3.0, 4.0]];
        let days = mean_day(&rows, 2).unwrap();
        assert_eq!(days[0], vec![2.0, 3.0]);
    }

    #[test]
    fn kmeans_recovers_separated_blobs() {
        let mut points = Vec::new();
        for &(cx, cy) in &[(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)] {
            for delta in [-0.1, 0.0, 0.1] {
                points.push(vec![cx + delta, cy - delta]);
            }
        }
        let model = kmeans(&points, 3, 7, 100).unwrap();
        assert!(model.inertia < 0.2, "inertia {}", model.inertia);
        // Each blob lands in exactly one cluster.
        for blob in 0..3 {
            let first = model.labels[blob * 3];
            assert!(model.labels[blob * 3..(blob + 1) * 3]
                .iter()
                .all(|&l| l == first));
        }
        assert_eq!(model.cluster_sizes(), vec![3, 3, 3]);

        // Deterministic: a second run reproduces the exact same model.
        let again = kmeans(&points, 3, 7, 100).unwrap();
        assert_eq!(model.labels, again.labels);
        for (a, b) in model.centroids.iter().zip(&again.centroids) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn kmeans_rejects_impossible_requests() {
        let points = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            kmeans(&points, 3, 0, 10),
            Err(ProfileError::TooFewPoints { points: 2, k: 3 })
        ));
        assert!(kmeans(&[], 1, 0, 10).is_err());
    }

    #[test]
    fn class_profiles_scale_to_the_reference_total() {
        let shapes = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        let profiles = synthesize_class_profiles(&shapes, &[3, 1], 20.0).unwrap();
        assert_eq!(profiles[0], vec![2.0, 2.0]);
        assert_eq!(profiles[1], vec![4.0, 4.0]);
        // Community total: 3 agents at 4 plus 1 agent at 8.
        let total: f64 = profiles
            .iter()
            .zip([3.0, 1.0])
            .map(|(p, n)| n * p.iter().sum::<f64>())
            .sum();
        assert_eq!(total, 20.0);
    }

    #[test]
    fn apportionment_is_exact_and_stable() {
        assert_eq!(apportion(&[0.9, 0.1], 10).unwrap(), vec![9, 1]);
        assert_eq!(apportion(&[0.7, 0.1, 0.1, 0.1], 10).unwrap(), vec![7, 1, 1, 1]);
        // Remainders: 0.5 each; ties resolve toward the lowest index.
        assert_eq!(apportion(&[1.0, 1.0], 3).unwrap(), vec![2, 1]);
        let parts = apportion(&[0.3, 0.3, 0.3, 0.1], 17).unwrap();
        assert_eq!(parts.iter().sum::<usize>(), 17);
        assert!(apportion(&[0.0, 0.0], 5).is_err());
    }

    #[test]
    fn archetype_shapes_peak_where_expected() {
        for archetype in Archetype::ALL {
            let shape = archetype.daily_shape();
            assert_eq!(shape.len(), 48);
            assert!(shape.iter().all(|&v| v > 0.0));
            let argmax = shape
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            match archetype {
                Archetype::EveningPeak => assert!((34..=40).contains(&argmax), "{argmax}"),
                Archetype::StayAtHome => assert!((20..=30).contains(&argmax), "{argmax}"),
                Archetype::MShape => assert!((13..=18).contains(&argmax), "{argmax}"),
                Archetype::NightOwl => assert!(argmax <= 6, "{argmax}"),
            }
        }
    }

    #[test]
    fn synthetic_community_is_deterministic_and_well_shaped() {
        let config = SyntheticCommunityConfig {
            n_agents: 10,
            timesteps: 96,
            ..SyntheticCommunityConfig::default()
        };
        let (matrix, labels) = generate_synthetic_community(&config).unwrap();
        assert_eq!(matrix.n_agents(), 10);
        assert_eq!(matrix.timesteps(), 96);
        assert_eq!(labels, vec![0, 0, 0, 0, 0, 0, 0, 1, 2, 3]);

        let (again, _) = generate_synthetic_community(&config).unwrap();
        for (a, b) in matrix.rows().iter().zip(again.rows()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn clean_synthetic_agents_of_one_archetype_are_identical() {
        let config = SyntheticCommunityConfig {
            n_agents: 4,
            timesteps: 48,
            mix: vec![(Archetype::EveningPeak, 1.0)],
            sigma_scale: 0.0,
            noise: 0.0,
            ..SyntheticCommunityConfig::default()
        };
        let (matrix, _) = generate_synthetic_community(&config).unwrap();
        let first = matrix.row(0);
        for agent in 1..4 {
            for (a, b) in matrix.row(agent).iter().zip(first) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        // The horizon is one day of half-hours = 24 hours, so the energy
        // target pro-rates to annual_kwh_mean * 24 / 8760.
        let energy: f64 = first.iter().map(|v| v * 0.5).sum();
        let expected = 3500.0 * 24.0 / 8760.0;
        assert!(((energy - expected) / expected).abs() < 1e-12, "{energy}");
    }
}
