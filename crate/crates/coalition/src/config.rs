//! TOML-backed configuration for the command-line tools: simulation
//! horizon, asset prices and sizing, tariffs, sampler settings, sweep
//! grids, and the data calendar. Every field has a default, so an empty
//! file is a valid configuration.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{Method, SamplerConfig};
use crate::cost::{AssetConfig, AssetSizing};
use crate::profiles::CalendarConfig;
use crate::simulation::{BatterySpec, SimulationError, TariffSchedule};
use crate::timeseries::{
    load_generation_csv, load_power_curve_csv, load_wind_speed_csv, wind_power_from_speed,
    PowerCurve, TimeseriesError,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Unreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{series} series has {got} samples but the horizon needs {needed}")]
    ShortSeries {
        series: &'static str,
        got: usize,
        needed: usize,
    },
    #[error(transparent)]
    Battery(#[from] SimulationError),
    #[error(transparent)]
    Timeseries(#[from] TimeseriesError),
}

/// Top-level configuration. Unknown keys are rejected so typos surface
/// instead of silently falling back to defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    /// Simulation horizon in timesteps (one year of half-hours = 17520).
    pub timesteps: usize,
    /// Timestep length in hours.
    pub dt_hours: f64,
    pub battery: BatterySection,
    pub wind: WindSection,
    pub tariffs: TariffSection,
    pub assets: AssetsSection,
    pub sampler: SamplerConfig,
    pub sweep: SweepSection,
    pub calendar: CalendarConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            timesteps: 17520,
            dt_hours: 0.5,
            battery: BatterySection::default(),
            wind: WindSection::default(),
            tariffs: TariffSection::default(),
            assets: AssetsSection::default(),
            sampler: SamplerConfig::default(),
            sweep: SweepSection::default(),
            calendar: CalendarConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatterySection {
    /// Installed energy per community member (kWh/agent).
    pub kwh_per_agent: f64,
    /// Capital price (GBP/kWh).
    pub cost_per_kwh: f64,
    /// Shelf lifetime (years).
    pub lifetime_years: f64,
    /// Power limit as a fraction of capacity per hour.
    pub c_rate: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
    /// Lower state-of-charge bound as a fraction of capacity.
    pub soc_min_frac: f64,
    /// Upper state-of-charge bound as a fraction of capacity.
    pub soc_max_frac: f64,
    /// Initial state of charge; defaults to the lower bound.
    pub soc_init_frac: Option<f64>,
}

impl Default for BatterySection {
    fn default() -> Self {
        Self {
            kwh_per_agent: 5.0,
            cost_per_kwh: 150.0,
            lifetime_years: 20.0,
            c_rate: 0.5,
            eta_charge: 0.95,
            eta_discharge: 0.95,
            soc_min_frac: 0.0,
            soc_max_frac: 1.0,
            soc_init_frac: None,
        }
    }
}

impl BatterySection {
    /// Battery shape installed per agent; coalitions scale its capacity
    /// while keeping the C-rate, SoC window, and efficiencies.
    pub fn per_agent_spec(&self) -> Result<BatterySpec, ConfigError> {
        let spec = BatterySpec {
            capacity_kwh: self.kwh_per_agent,
            p_max_kw: self.c_rate * self.kwh_per_agent,
            soc_min_frac: self.soc_min_frac,
            soc_max_frac: self.soc_max_frac,
            soc_init_frac: self.soc_init_frac.unwrap_or(self.soc_min_frac),
            eta_c: self.eta_charge,
            eta_d: self.eta_discharge,
        };
        Ok(spec.validated()?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindSection {
    /// Installed turbine fraction per community member.
    pub scale_per_agent: f64,
    /// Rated power of one turbine (kW).
    pub rated_kw: f64,
    /// Capital price (GBP/kW).
    pub cost_per_kw: f64,
    /// Plant lifetime (years).
    pub lifetime_years: f64,
    /// Precomputed single-turbine output (kW per timestep), one column.
    pub generation_csv: Option<String>,
    /// Wind speeds (m/s per timestep) to run through the power curve.
    pub speed_csv: Option<String>,
    /// Power curve knots `(speed_ms, power_kw)`; a built-in 330 kW curve
    /// is used when absent.
    pub power_curve_csv: Option<String>,
    /// Seed for the synthetic wind series used when no file is given.
    pub synthetic_seed: u64,
}

impl Default for WindSection {
    fn default() -> Self {
        Self {
            scale_per_agent: 0.006,
            rated_kw: 330.0,
            cost_per_kw: 1072.0,
            lifetime_years: 20.0,
            generation_csv: None,
            speed_csv: None,
            power_curve_csv: None,
            synthetic_seed: 0,
        }
    }
}

impl WindSection {
    /// Resolves the power curve: the configured CSV or the built-in one.
    pub fn power_curve(&self) -> Result<PowerCurve, ConfigError> {
        match &self.power_curve_csv {
            Some(path) => Ok(load_power_curve_csv(Path::new(path))?),
            None => Ok(default_power_curve()),
        }
    }

    /// Single-turbine output over the horizon. Priority: precomputed
    /// generation file, wind-speed file through the power curve, then a
    /// seeded synthetic wind year. Longer series are truncated to the
    /// horizon; shorter ones are an error.
    pub fn generation_base(&self, timesteps: usize) -> Result<Vec<f64>, ConfigError> {
        if let Some(path) = &self.generation_csv {
            let series = load_generation_csv(Path::new(path))?;
            return trim_series(series.kw().to_vec(), timesteps, "generation");
        }
        let curve = self.power_curve()?;
        let speeds = match &self.speed_csv {
            Some(path) => trim_series(
                load_wind_speed_csv(Path::new(path))?,
                timesteps,
                "wind speed",
            )?,
            None => synthetic_wind_speeds(timesteps, self.synthetic_seed),
        };
        Ok(wind_power_from_speed(&speeds, &curve, 1.0)?.kw().to_vec())
    }
}

fn trim_series(
    mut series: Vec<f64>,
    timesteps: usize,
    name: &'static str,
) -> Result<Vec<f64>, ConfigError> {
    if series.len() < timesteps {
        return Err(ConfigError::ShortSeries {
            series: name,
            got: series.len(),
            needed: timesteps,
        });
    }
    series.truncate(timesteps);
    Ok(series)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TariffSection {
    pub import_pence_per_kwh: f64,
    pub export_pence_per_kwh: f64,
}

impl Default for TariffSection {
    fn default() -> Self {
        Self {
            import_pence_per_kwh: 16.0,
            export_pence_per_kwh: 0.0,
        }
    }
}

impl TariffSection {
    pub fn schedule(&self) -> TariffSchedule {
        TariffSchedule::flat(self.import_pence_per_kwh, self.export_pence_per_kwh)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssetsSection {
    /// Whether subcoalitions get their own share of assets or are costed
    /// against the full community installation.
    pub sizing: AssetSizing,
}

impl Default for AssetsSection {
    fn default() -> Self {
        Self {
            sizing: AssetSizing::ScaleWithCoalition,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Community sizes visited by the size sweep.
    pub sizes: Vec<usize>,
    /// Class shares; head counts are the largest-remainder rounding of
    /// `share * N`.
    pub ratio: Vec<f64>,
    /// Allocation methods to benchmark against the exact value.
    pub methods: Vec<Method>,
    /// Community size held fixed by the composition sweep.
    pub composition_size: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            sizes: (1..=20).map(|i| i * 10).collect(),
            ratio: vec![0.9, 0.1],
            methods: vec![
                Method::MarginalContribution,
                Method::Sev,
                Method::AdaptiveSampling,
            ],
            composition_size: 200,
        }
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: AppConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.timesteps == 0 {
            return Err(ConfigError::Invalid("timesteps must be positive".into()));
        }
        if !(self.dt_hours > 0.0) {
            return Err(ConfigError::Invalid("dt_hours must be positive".into()));
        }
        for (name, v) in [
            ("battery.kwh_per_agent", self.battery.kwh_per_agent),
            ("battery.cost_per_kwh", self.battery.cost_per_kwh),
            ("battery.lifetime_years", self.battery.lifetime_years),
            ("battery.c_rate", self.battery.c_rate),
            ("wind.scale_per_agent", self.wind.scale_per_agent),
            ("wind.rated_kw", self.wind.rated_kw),
            ("wind.cost_per_kw", self.wind.cost_per_kw),
            ("wind.lifetime_years", self.wind.lifetime_years),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ConfigError::Invalid(format!(
                    "{name} must be a finite non-negative number, got {v}"
                )));
            }
        }
        if self.battery.lifetime_years <= 0.0 || self.wind.lifetime_years <= 0.0 {
            return Err(ConfigError::Invalid("lifetimes must be positive".into()));
        }
        self.battery.per_agent_spec()?;
        if self.sweep.ratio.is_empty() {
            return Err(ConfigError::Invalid("sweep.ratio must not be empty".into()));
        }
        Ok(())
    }

    /// Asset prices and sizing for a community of `community_size` agents.
    pub fn asset_config(&self, community_size: usize) -> AssetConfig {
        AssetConfig {
            asset_sizing: self.assets.sizing,
            battery_kwh_per_agent: self.battery.kwh_per_agent,
            battery_cost_per_kwh: self.battery.cost_per_kwh,
            battery_lifetime_years: self.battery.lifetime_years,
            wind_scale_per_agent: self.wind.scale_per_agent,
            wind_rated_kw: self.wind.rated_kw,
            wind_cost_per_kw: self.wind.cost_per_kw,
            wind_lifetime_years: self.wind.lifetime_years,
            community_size,
        }
    }
}

/// Built-in piecewise-linear power curve of a 330 kW turbine: cut-in at
/// 3 m/s, rated from 13 m/s, cut-out above 25 m/s.
pub fn default_power_curve() -> PowerCurve {
    PowerCurve::new(vec![
        (3.0, 0.0),
        (4.0, 11.0),
        (5.0, 35.0),
        (6.0, 65.0),
        (7.0, 110.0),
        (8.0, 165.0),
        (9.0, 225.0),
        (10.0, 275.0),
        (11.0, 310.0),
        (12.0, 325.0),
        (13.0, 330.0),
        (25.0, 330.0),
    ])
    .expect("static knots are strictly increasing")
}

/// Deterministic synthetic wind-speed series (m/s): a seasonal swing, a
/// daily swing, and seeded autoregressive gusts, floored at zero. Periods
/// assume half-hourly sampling.
pub fn synthetic_wind_speeds(timesteps: usize, seed: u64) -> Vec<f64> {
    const STEPS_PER_DAY: f64 = 48.0;
    const STEPS_PER_YEAR: f64 = 17520.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gust = 0.0f64;
    (0..timesteps)
        .map(|t| {
            let tf = t as f64;
            let seasonal = 3.5 * (std::f64::consts::TAU * tf / STEPS_PER_YEAR + 1.1).sin();
            let daily = 1.5 * (std::f64::consts::TAU * tf / STEPS_PER_DAY + 0.3).sin();
            gust = 0.92 * gust + 0.9 * (rng.gen::<f64>() * 2.0 - 1.0);
            (8.5 + seasonal + daily + gust).max(0.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_the_experiment_defaults() {
        let config = AppConfig::from_toml_str("").unwrap();
        assert_eq!(config.timesteps, 17520);
        assert_eq!(config.dt_hours, 0.5);
        assert_eq!(config.battery.kwh_per_agent, 5.0);
        assert_eq!(config.wind.scale_per_agent, 0.006);
        assert_eq!(config.tariffs.import_pence_per_kwh, 16.0);
        assert_eq!(config.tariffs.export_pence_per_kwh, 0.0);
        assert_eq!(config.sampler.samples_per_agent, 1000);
        assert_eq!(config.sweep.sizes.first(), Some(&10));
        assert_eq!(config.sweep.sizes.last(), Some(&200));

        let spec = config.battery.per_agent_spec().unwrap();
        assert_eq!(spec.capacity_kwh, 5.0);
        assert_eq!(spec.p_max_kw, 2.5);
        assert_eq!(spec.soc_init_frac, 0.0);
    }

    #[test]
    fn sections_override_defaults() {
        let config = AppConfig::from_toml_str(
            r#"
            timesteps = 96
            dt_hours = 0.25

            [battery]
            kwh_per_agent = 10.0
            soc_min_frac = 0.1
            soc_max_frac = 0.9

            [tariffs]
            import_pence_per_kwh = 30.0
            export_pence_per_kwh = 5.0

            [assets]
            sizing = "fixed-community"

            [sampler]
            samples_per_agent = 50
            seed = 9

            [sweep]
            sizes = [10, 20]
            ratio = [0.8, 0.2]
            methods = ["mc", "sev"]
            "#,
        )
        .unwrap();
        assert_eq!(config.timesteps, 96);
        assert_eq!(config.assets.sizing, AssetSizing::FixedCommunity);
        assert_eq!(config.sampler.samples_per_agent, 50);
        assert_eq!(config.sweep.methods, vec![Method::MarginalContribution, Method::Sev]);
        // soc_init defaults to the lower bound.
        let spec = config.battery.per_agent_spec().unwrap();
        assert_eq!(spec.soc_init_frac, 0.1);
        let assets = config.asset_config(7);
        assert_eq!(assets.community_size, 7);
        assert_eq!(assets.battery_kwh_per_agent, 10.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            AppConfig::from_toml_str("[battery]\nkwh_per_agnet = 5.0"),
            Err(ConfigError::Parse(_))
        ));
        assert!(AppConfig::from_toml_str("typo = 1").is_err());
    }

    #[test]
    fn nonsense_values_are_rejected() {
        assert!(AppConfig::from_toml_str("timesteps = 0").is_err());
        assert!(AppConfig::from_toml_str("[battery]\nsoc_min_frac = 0.9\nsoc_max_frac = 0.1")
            .is_err());
        assert!(AppConfig::from_toml_str("[wind]\nlifetime_years = 0.0").is_err());
    }

    #[test]
    fn default_power_curve_interpolates_and_clamps() {
        let curve = default_power_curve();
        assert_eq!(curve.power_at(2.9), 0.0);
        assert_eq!(curve.power_at(13.0), 330.0);
        assert_eq!(curve.power_at(20.0), 330.0);
        assert_eq!(curve.power_at(25.1), 0.0);
        // Halfway between the 8 and 9 m/s knots.
        assert!((curve.power_at(8.5) - 195.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_wind_is_deterministic_and_plausible() {
        let a = synthetic_wind_speeds(17520, 3);
        let b = synthetic_wind_speeds(17520, 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert!(a.iter().all(|&v| (0.0..=40.0).contains(&v)));
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        assert!((4.0..=13.0).contains(&mean), "mean {mean}");
        // Over a year the curve must see both calm and productive winds.
        let curve = default_power_curve();
        let powers: Vec<f64> = a.iter().map(|&v| curve.power_at(v)).collect();
        assert!(powers.iter().any(|&p| p == 0.0));
        assert!(powers.iter().any(|&p| p > 100.0));
    }

    #[test]
    fn generation_base_truncates_long_series_and_rejects_short_ones() {
        let wind = WindSection::default();
        let base = wind.generation_base(100).unwrap();
        assert_eq!(base.len(), 100);

        let missing = WindSection {
            generation_csv: Some("/nonexistent/gen.csv".into()),
            ..WindSection::default()
        };
        assert!(missing.generation_base(10).is_err());
    }
}
