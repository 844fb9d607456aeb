//! Experiment configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sbm_core::experiment::{BoundsGrid, EnsembleSettings, EpsilonRule, LocalTimeSpec, MomentsSpec};
use sbm_core::particle_sim::{BranchingRule, Horizon, Observable, SimConfig};
use sbm_core::{SpatialPoint, TestFunction};

use crate::error::{CliError, CliResult};

/// Which files a subcommand writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    #[default]
    Both,
}

impl ReportFormat {
    pub fn json(self) -> bool {
        self != ReportFormat::Csv
    }

    pub fn csv(self) -> bool {
        self != ReportFormat::Json
    }
}

/// Everything a run needs. `threads` and `out` are not serialized: they do
/// not influence results, so they stay out of the config hash and the
/// embedded copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub n_init: usize,
    /// Time step; omitted means `0.1/n_init`.
    pub dt: Option<f64>,
    pub branching: BranchingRule,
    pub seed: u64,
    pub replicas: usize,
    #[serde(skip_serializing)]
    pub threads: usize,
    pub t_list: Vec<f64>,
    /// Anchor distances; anchors sit on the first coordinate axis.
    pub x_list: Vec<f64>,
    pub epsilon: EpsilonRule,
    /// Functionals for the independence probe; empty means the defaults.
    pub companions: Vec<TestFunction>,
    /// Test functions for `moments` and `simulate`; empty means the defaults.
    pub functions: Vec<TestFunction>,
    /// `simulate` only: run each replica until extinction.
    pub run_to_extinction: bool,
    pub extinction_cap: Option<f64>,
    #[serde(skip_serializing)]
    pub out: PathBuf,
    pub format: ReportFormat,
    pub bounds: BoundsGrid,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dim: 3,
            n_init: 2000,
            dt: None,
            branching: BranchingRule::Linear,
            seed: 1,
            replicas: 500,
            threads: 1,
            t_list: vec![1.0],
            x_list: vec![0.3, 0.2, 0.1],
            epsilon: EpsilonRule::Auto,
            companions: Vec::new(),
            functions: Vec::new(),
            run_to_extinction: false,
            extinction_cap: None,
            out: PathBuf::from("results"),
            format: ReportFormat::Both,
            bounds: BoundsGrid::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    /// Checks shared by every subcommand.
    pub fn validate(&self) -> CliResult<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(invalid(format!("dim must be 2 or 3, got {}", self.dim)));
        }
        if self.replicas == 0 {
            return Err(invalid("replicas must be at least 1"));
        }
        if self.threads == 0 {
            return Err(invalid("threads must be at least 1"));
        }
        if self.n_init == 0 {
            return Err(invalid("n_init must be at least 1"));
        }
        if self.t_list.is_empty() || self.t_list.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(invalid("t_list must hold positive finite times"));
        }
        if self.x_list.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(invalid("every anchor distance in x_list must be positive"));
        }
        for f in self.companions.iter().chain(&self.functions) {
            f.validate(Some(self.dim))?;
        }
        Ok(())
    }

    /// Anchors are needed by the local-time subcommands.
    pub fn validate_anchors(&self) -> CliResult<()> {
        self.validate()?;
        if self.x_list.is_empty() {
            return Err(invalid("x_list is empty"));
        }
        Ok(())
    }

    pub fn validate_theorem1(&self) -> CliResult<()> {
        self.validate_anchors()?;
        if self.dim != 3 {
            return Err(invalid(format!("theorem1 needs dim = 3, config has dim = {}", self.dim)));
        }
        if let Some(r) = self.x_list.iter().find(|r| **r >= 1.0) {
            return Err(invalid(format!("theorem1 needs every |x| < 1, got {r}")));
        }
        Ok(())
    }

    pub fn validate_theorem2(&self) -> CliResult<()> {
        self.validate_anchors()?;
        if self.dim != 2 {
            return Err(invalid(format!("theorem2 needs dim = 2, config has dim = {}", self.dim)));
        }
        Ok(())
    }

    /// SHA-256 of the serialized config, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(bytes))
    }

    pub fn settings(&self) -> EnsembleSettings {
        EnsembleSettings {
            n_init: self.n_init,
            dt: self.dt,
            replicas: self.replicas,
            threads: self.threads,
            seed: self.seed,
            branching: self.branching,
        }
    }

    pub fn test_functions(&self) -> CliResult<Vec<TestFunction>> {
        if !self.functions.is_empty() {
            return Ok(self.functions.clone());
        }
        Ok(vec![
            TestFunction::constant(1.0),
            TestFunction::gaussian(SpatialPoint::origin(self.dim)?, 1.0),
        ])
    }

    pub fn moments_spec(&self, t: f64) -> CliResult<MomentsSpec> {
        Ok(MomentsSpec {
            dim: self.dim,
            t,
            functions: self.test_functions()?,
            settings: self.settings(),
        })
    }

    pub fn local_time_spec(&self) -> LocalTimeSpec {
        LocalTimeSpec {
            dim: self.dim,
            times: self.t_list.clone(),
            radii: self.x_list.clone(),
            epsilon: self.epsilon,
            companions: self.companions.clone(),
            settings: self.settings(),
        }
    }

    /// Config for `simulate`: every test function observed, snapshots at `t_list`.
    pub fn simulation(&self) -> CliResult<SimConfig> {
        let t_max = self.t_list.iter().cloned().fold(0.0, f64::max);
        let horizon = if self.run_to_extinction {
            Horizon::Extinction { cap: self.extinction_cap }
        } else {
            Horizon::Fixed { t_max }
        };
        let mut config = sbm_core::experiment::simulation_config(self.dim, horizon, &self.settings());
        for f in self.test_functions()? {
            config = config.with_observable(Observable::point(f));
        }
        config = config.with_snapshots(&self.t_list);
        config.validate()?;
        Ok(config)
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}
