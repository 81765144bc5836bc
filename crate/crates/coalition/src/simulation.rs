//! Battery dispatch simulation against net demand.
//!
//! The battery follows a greedy self-consumption policy at every step:
//! surplus generation charges it (capped by rated power and headroom) and
//! the remainder is exported; deficits discharge it (capped by rated power
//! and the energy above the floor) and the remainder is imported. Power
//! flows observe the sign convention `demand = p_grid + p_bat + generation`,
//! so charging makes `p_bat` negative.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("demand ({demand}) and generation ({generation}) lengths differ")]
    LengthMismatch { demand: usize, generation: usize },
    #[error("invalid battery specification: {0}")]
    InvalidSpec(String),
    #[error("timestep must be positive and finite, got {0}")]
    InvalidTimestep(f64),
    #[error("tariff series length {got} does not match horizon {expected}")]
    TariffLength { expected: usize, got: usize },
}

/// Battery parameters. State of charge is tracked in kWh; the usable window
/// is `[soc_min_frac, soc_max_frac] * capacity_kwh`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatterySpec {
    /// Nameplate capacity (kWh).
    pub capacity_kwh: f64,
    /// Maximum charge/discharge power (kW).
    pub p_max_kw: f64,
    /// Lower state-of-charge bound as a fraction of capacity.
    pub soc_min_frac: f64,
    /// Upper state-of-charge bound as a fraction of capacity.
    pub soc_max_frac: f64,
    /// Initial state of charge as a fraction of capacity.
    pub soc_init_frac: f64,
    /// Charging efficiency in (0, 1].
    pub eta_c: f64,
    /// Discharging efficiency in (0, 1].
    pub eta_d: f64,
}

impl BatterySpec {
    /// Validates parameter ranges; returns the spec unchanged when sound.
    pub fn validated(self) -> Result<Self, SimulationError> {
        let err = |msg: String| Err(SimulationError::InvalidSpec(msg));
        if !(self.capacity_kwh >= 0.0 && self.capacity_kwh.is_finite()) {
            return err(format!("capacity_kwh = {}", self.capacity_kwh));
        }
        if !(self.p_max_kw >= 0.0 && self.p_max_kw.is_finite()) {
            return err(format!("p_max_kw = {}", self.p_max_kw));
        }
        if !(0.0..=1.0).contains(&self.soc_min_frac)
            || !(0.0..=1.0).contains(&self.soc_max_frac)
            || self.soc_min_frac > self.soc_max_frac
        {
            return err(format!(
                "soc window [{}, {}]",
                self.soc_min_frac, self.soc_max_frac
            ));
        }
        if !(self.soc_min_frac..=self.soc_max_frac).contains(&self.soc_init_frac) {
            return err(format!(
                "soc_init_frac {} outside [{}, {}]",
                self.soc_init_frac, self.soc_min_frac, self.soc_max_frac
            ));
        }
        if !(self.eta_c > 0.0 && self.eta_c <= 1.0 && self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return err(format!("efficiencies ({}, {})", self.eta_c, self.eta_d));
        }
        Ok(self)
    }

    /// Same battery rescaled to a new capacity, preserving the fractional
    /// state-of-charge window and the power-to-capacity ratio (C-rate).
    pub fn with_capacity(&self, capacity_kwh: f64) -> Self {
        let p_max_kw = if self.capacity_kwh > 0.0 {
            self.p_max_kw * capacity_kwh / self.capacity_kwh
        } else {
            0.0
        };
        Self {
            capacity_kwh,
            p_max_kw,
            ..self.clone()
        }
    }

    pub fn soc_min_kwh(&self) -> f64 {
        self.soc_min_frac * self.capacity_kwh
    }

    pub fn soc_max_kwh(&self) -> f64 {
        self.soc_max_frac * self.capacity_kwh
    }

    pub fn soc_init_kwh(&self) -> f64 {
        self.soc_init_frac * self.capacity_kwh
    }

    /// Usable energy window (kWh) between the SoC bounds.
    pub fn usable_kwh(&self) -> f64 {
        self.soc_max_kwh() - self.soc_min_kwh()
    }
}

/// Import/export prices in pence/kWh, either flat or per timestep.
#[derive(Debug, Clone, PartialEq)]
pub enum Tariff {
    Flat(f64),
    Series(Vec<f64>),
}

impl Tariff {
    fn at(&self, t: usize) -> f64 {
        match self {
            Tariff::Flat(p) => *p,
            Tariff::Series(v) => v[t],
        }
    }

    fn check_len(&self, horizon: usize) -> Result<(), SimulationError> {
        if let Tariff::Series(v) = self {
            if v.len() != horizon {
                return Err(SimulationError::TariffLength {
                    expected: horizon,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }
}

/// Buy/sell price schedule for grid exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct TariffSchedule {
    pub import_pence_per_kwh: Tariff,
    pub export_pence_per_kwh: Tariff,
}

impl TariffSchedule {
    pub fn flat(import_pence_per_kwh: f64, export_pence_per_kwh: f64) -> Self {
        Self {
            import_pence_per_kwh: Tariff::Flat(import_pence_per_kwh),
            export_pence_per_kwh: Tariff::Flat(export_pence_per_kwh),
        }
    }

    pub fn import_at(&self, t: usize) -> f64 {
        self.import_pence_per_kwh.at(t)
    }

    pub fn export_at(&self, t: usize) -> f64 {
        self.export_pence_per_kwh.at(t)
    }

    /// Validates per-step tariff series against the simulation horizon.
    pub fn check_horizon(&self, horizon: usize) -> Result<(), SimulationError> {
        self.import_pence_per_kwh.check_len(horizon)?;
        self.export_pence_per_kwh.check_len(horizon)
    }
}

/// Step-by-step result of a dispatch run. All series have one entry per
/// timestep; the state of charge before the first step is kept separately
/// so the full SoC path (length `T + 1`) can be reconstructed.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    /// Battery power (kW): negative while charging, positive discharging.
    pub p_bat_kw: Vec<f64>,
    /// State of charge after each step (kWh).
    pub soc_kwh: Vec<f64>,
    /// Grid power (kW): positive imports, negative exports.
    pub p_grid_kw: Vec<f64>,
    /// Energy bought per step (kWh).
    pub e_b_kwh: Vec<f64>,
    /// Energy sold per step (kWh).
    pub e_s_kwh: Vec<f64>,
    /// State of charge before the first step (kWh).
    pub soc_init_kwh: f64,
    /// Timestep length (hours).
    pub dt_h: f64,
}

impl SimulationTrace {
    pub fn timesteps(&self) -> usize {
        self.p_bat_kw.len()
    }

    /// Total energy bought over the horizon (kWh).
    pub fn energy_bought_kwh(&self) -> f64 {
        self.e_b_kwh.iter().sum()
    }

    /// Total energy sold over the horizon (kWh).
    pub fn energy_sold_kwh(&self) -> f64 {
        self.e_s_kwh.iter().sum()
    }

    /// Full SoC path (initial state followed by the post-step states),
    /// expressed in percent of the usable maximum `soc_max_kwh`. Returns an
    /// empty vector for a zero-capacity battery, which has no cycles.
    pub fn soc_percent_path(&self, battery: &BatterySpec) -> Vec<f64> {
        let max = battery.soc_max_kwh();
        if max <= 0.0 {
            return Vec::new();
        }
        std::iter::once(self.soc_init_kwh)
            .chain(self.soc_kwh.iter().copied())
            .map(|soc| soc / max * 100.0)
            .collect()
    }
}

/// Simulates the greedy dispatch policy over the whole horizon.
///
/// For each step with demand `d`, generation `g` and surplus `g - d`:
///
/// * surplus > 0: charge at `min(surplus, p_max, headroom / (eta_c * dt))`,
///   export the rest;
/// * surplus < 0: discharge at `min(-surplus, p_max, eta_d * above_floor / dt)`,
///   import the rest;
/// * surplus = 0: the battery idles.
///
/// When the state-of-charge bound is the binding limit the post-step SoC is
/// set to that bound exactly, so full-charge touches are exact and the
/// degradation stage can segment cycles on `soc == soc_max`.
pub fn simulate(
    demand_kw: &[f64],
    generation_kw: &[f64],
    battery: &BatterySpec,
    dt_h: f64,
) -> Result<SimulationTrace, SimulationError> {
    if demand_kw.len() != generation_kw.len() {
        return Err(SimulationError::LengthMismatch {
            demand: demand_kw.len(),
            generation: generation_kw.len(),
        });
    }
    if !(dt_h > 0.0 && dt_h.is_finite()) {
        return Err(SimulationError::InvalidTimestep(dt_h));
    }
    battery.clone().validated()?;

    let t_len = demand_kw.len();
    let soc_min = battery.soc_min_kwh();
    let soc_max = battery.soc_max_kwh();
    let mut soc = battery.soc_init_kwh();

    let mut p_bat_kw = Vec::with_capacity(t_len);
    let mut soc_kwh = Vec::with_capacity(t_len);
    let mut p_grid_kw = Vec::with_capacity(t_len);
    let mut e_b_kwh = Vec::with_capacity(t_len);
    let mut e_s_kwh = Vec::with_capacity(t_len);

    for t in 0..t_len {
        let d = demand_kw[t];
        let g = generation_kw[t];
        let surplus = g - d;

        let (p_bat, e_b, e_s) = if surplus > 0.0 {
            let headroom = (soc_max - soc) / (battery.eta_c * dt_h);
            let p = surplus.min(battery.p_max_kw).min(headroom);
            if p == headroom {
                soc = soc_max;
            } else {
                soc += battery.eta_c * p * dt_h;
            }
            (-p, 0.0, (surplus - p) * dt_h)
        } else if surplus < 0.0 {
            let deficit = -surplus;
            let above_floor = battery.eta_d * (soc - soc_min) / dt_h;
            let p = deficit.min(battery.p_max_kw).min(above_floor);
            if p == above_floor {
                soc = soc_min;
            } else {
                soc -= p * dt_h / battery.eta_d;
            }
            (p, (deficit - p) * dt_h, 0.0)
        } else {
            (0.0, 0.0, 0.0)
        };

        p_bat_kw.push(p_bat);
        soc_kwh.push(soc);
        p_grid_kw.push(d - g - p_bat);
        e_b_kwh.push(e_b);
        e_s_kwh.push(e_s);
    }

    Ok(SimulationTrace {
        p_bat_kw,
        soc_kwh,
        p_grid_kw,
        e_b_kwh,
        e_s_kwh,
        soc_init_kwh: battery.soc_init_kwh(),
        dt_h,
    })
}
