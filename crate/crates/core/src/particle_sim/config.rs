use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::test_function::TestFunction;

/// Largest allowed `N·dt`.
pub const MAX_BRANCHING_LOAD: f64 = 0.1;

/// When a simulation stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Horizon {
    /// Run to time `t_max` (or earlier extinction).
    Fixed { t_max: f64 },
    /// Run until the population dies out, giving up at `cap` if set.
    Extinction { cap: Option<f64> },
}

impl Horizon {
    /// Time at which stepping stops if the population survives.
    pub fn limit(&self) -> f64 {
        match *self {
            Horizon::Fixed { t_max } => t_max,
            Horizon::Extinction { cap } => cap.unwrap_or(f64::INFINITY),
        }
    }
}

/// Per-step probability that a particle branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchingRule {
    /// `q = N·dt`. The per-step offspring variance then equals `dt·N`
    /// exactly, so `Var X_t(1) = t` on the grid.
    #[default]
    Linear,
    /// `q = 1 − exp(−N·dt)`, the probability of at least one event of a
    /// rate-`N` clock in one step. Underestimates the variance by a factor
    /// `q/(N·dt)`.
    Exponential,
}

impl BranchingRule {
    pub fn probability(self, n_init: usize, dt: f64) -> f64 {
        let load = n_init as f64 * dt;
        match self {
            BranchingRule::Linear => load,
            BranchingRule::Exponential => -(-load).exp_m1(),
        }
    }
}

/// A functional `X_s(φ)` tracked during a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub function: TestFunction,
    /// Accumulate `∫₀ᵗ X_s(φ) ds` every step in addition to the point values.
    #[serde(default)]
    pub occupation: bool,
}

impl Observable {
    pub fn point(function: TestFunction) -> Self {
        Observable { function, occupation: false }
    }

    pub fn occupation(function: TestFunction) -> Self {
        Observable { function, occupation: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dim: usize,
    pub n_init: usize,
    pub dt: f64,
    pub horizon: Horizon,
    pub seed: u64,
    #[serde(default)]
    pub observables: Vec<Observable>,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub branching: BranchingRule,
    /// Store particle positions in snapshots.
    #[serde(default)]
    pub keep_positions: bool,
}

impl SimConfig {
    /// Fixed-horizon configuration with `dt = 0.1/N`.
    pub fn new(dim: usize, n_init: usize, t_max: f64, seed: u64) -> Self {
        SimConfig {
            dim,
            n_init,
            dt: MAX_BRANCHING_LOAD / n_init.max(1) as f64,
            horizon: Horizon::Fixed { t_max },
            seed,
            observables: Vec::new(),
            snapshot_times: Vec::new(),
            branching: BranchingRule::default(),
            keep_positions: false,
        }
    }

    pub fn with_observable(mut self, obs: Observable) -> Self {
        self.observables.push(obs);
        self
    }

    pub fn with_snapshots(mut self, times: &[f64]) -> Self {
        self.snapshot_times = times.to_vec();
        self
    }

    pub fn branching_probability(&self) -> f64 {
        self.branching.probability(self.n_init, self.dt)
    }

    /// Index of the observable with exactly this function, if registered.
    pub fn find(&self, f: &TestFunction, occupation: bool) -> Option<usize> {
        self.observables
            .iter()
            .position(|o| o.function == *f && (!occupation || o.occupation))
    }

    /// Number of steps to reach time `s`, rounding to the nearest grid point.
    pub fn steps_to(&self, s: f64) -> u64 {
        (s / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::Config(format!("dimension must be 2 or 3, got {}", self.dim)));
        }
        if self.n_init == 0 {
            return Err(Error::Config("n_init must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        let load = self.n_init as f64 * self.dt;
        if load > MAX_BRANCHING_LOAD * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "N·dt = {load} exceeds {MAX_BRANCHING_LOAD}"
            )));
        }
        match self.horizon {
            Horizon::Fixed { t_max } if !(t_max > 0.0 && t_max.is_finite()) => {
                return Err(Error::Config(format!("t_max must be positive, got {t_max}")));
            }
            Horizon::Extinction { cap: Some(c) } if !(c > 0.0) => {
                return Err(Error::Config(format!("extinction cap must be positive, got {c}")));
            }
            _ => {}
        }
        if self.snapshot_times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("snapshot times must be strictly increasing".into()));
        }
        let limit = self.horizon.limit();
        if let Some(bad) = self.snapshot_times.iter().find(|&&s| !(s >= 0.0 && s <= limit)) {
            return Err(Error::Config(format!("snapshot time {bad} outside [0, {limit}]")));
        }
        for o in &self.observables {
            o.function.validate(Some(self.dim))?;
        }
        Ok(())
    }
}
