//! Experiment drivers: analytic bound sweeps, moment calibration against the
//! exact oracles, and local-time ensembles with their Tanaka, fluctuation and
//! boundedness analyses.
//!
//! Each driver returns a serialisable report. Pass flags in the reports use
//! the fixed tolerances below; nothing is tuned per run.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::estimator::{self, psi};
use crate::kernel_math::{
    self, bm_abs_moment, log_ratio_sides, mollified_local_time_mean, occupation_singular_integral,
    singular_kernel_bound, singular_kernel_moment, SpatialPoint, Tolerance, C2, C31,
};
use crate::moment_oracle;
use crate::particle_sim::{self, rng, BranchingRule, Horizon, Observable, SimConfig, Trajectory};
use crate::stats::{
    self, BoundednessReport, CorrelationEstimate, DecorrelationReport, EnsembleSummary, NormalityReport, ProbeOutcome,
};
use crate::test_function::TestFunction;

/// Relative slack allowed on analytic bounds for quadrature error.
pub const BOUND_RELATIVE_SLACK: f64 = 1e-6;
/// Allowed relative deviation of second moments and variances from their oracles.
pub const MOMENT_TOLERANCE: f64 = 0.10;
/// Allowed relative deviation of residual variances from the expected quadratic variation.
pub const ISOMETRY_TOLERANCE: f64 = 0.15;
/// Allowed relative deviation of the normalised fluctuation variance.
pub const FLUCTUATION_VARIANCE_TOLERANCE: f64 = 0.20;
/// Allowed relative deviation of the two-dimensional mean local time.
pub const GROWTH_TOLERANCE: f64 = 0.15;
/// Exploratory threshold for the KS distance of the fluctuation statistic.
pub const KS_THRESHOLD: f64 = 0.12;
/// Largest accepted relative residual in the exact cross-relation.
pub const CROSS_RELATION_TOLERANCE: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Shared settings

/// Mollifier width: `auto` is `(|x|/4)²`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EpsilonRule {
    #[default]
    Auto,
    Fixed(f64),
}

impl EpsilonRule {
    pub fn width(&self, x: &SpatialPoint) -> f64 {
        match *self {
            EpsilonRule::Auto => estimator::auto_epsilon(x),
            EpsilonRule::Fixed(e) => e,
        }
    }
}

impl Serialize for EpsilonRule {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            EpsilonRule::Auto => s.serialize_str("auto"),
            EpsilonRule::Fixed(e) => s.serialize_f64(e),
        }
    }
}

impl<'de> Deserialize<'de> for EpsilonRule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            Value(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Word(w) if w == "auto" => Ok(EpsilonRule::Auto),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("unknown epsilon rule `{w}`"))),
            Raw::Value(v) => Ok(EpsilonRule::Fixed(v)),
        }
    }
}

/// Particle-system and ensemble parameters common to all simulations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleSettings {
    pub n_init: usize,
    /// Time step; `None` means `0.1/N`.
    pub dt: Option<f64>,
    pub replicas: usize,
    /// Worker threads; results do not depend on it, so it is not serialized.
    #[serde(skip_serializing)]
    pub threads: usize,
    pub seed: u64,
    pub branching: BranchingRule,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        EnsembleSettings {
            n_init: 2000,
            dt: None,
            replicas: 500,
            threads: 1,
            seed: 1,
            branching: BranchingRule::Linear,
        }
    }
}

impl EnsembleSettings {
    fn sim_config(&self, dim: usize, t_max: f64) -> SimConfig {
        let mut c = SimConfig::new(dim, self.n_init, t_max, self.seed);
        if let Some(dt) = self.dt {
            c.dt = dt;
        }
        c.branching = self.branching;
        c
    }

    fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be at least 1".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Config("need at least one time".into()));
    }
    if times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::Config("times must be positive and finite".into()));
    }
    Ok(())
}

/// The anchor `r·e₁`.
pub fn anchor(dim: usize, r: f64) -> Result<SpatialPoint> {
    SpatialPoint::on_axis(dim, r)
}

// ---------------------------------------------------------------------------
// Analytic bounds

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundsGrid {
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
    pub alphas_2d: Vec<f64>,
    pub alphas_3d: Vec<f64>,
    pub occupation_times: Vec<f64>,
    pub occupation_radii: Vec<f64>,
    pub log_ratio_pairs: usize,
    pub seed: u64,
}

impl Default for BoundsGrid {
    fn default() -> Self {
        BoundsGrid {
            times: vec![1e-3, 1e-2, 0.1, 1.0, 10.0],
            radii: vec![1e-2, 0.05, 0.1, 0.5, 1.0, 2.0, 10.0],
            alphas_2d: vec![0.5, 1.0, 1.5],
            alphas_3d: vec![0.5, 1.0, 1.5, 2.0],
            occupation_times: vec![1e-2, 0.1, 1.0, 10.0],
            occupation_radii: vec![0.0, 1e-2, 0.1, 0.5, 1.0, 3.0],
            log_ratio_pairs: 100_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// `singular_moment` or `occupation_inverse_distance`.
    pub check: String,
    pub dim: usize,
    pub t: f64,
    pub radius: f64,
    pub alpha: f64,
    pub value: f64,
    pub abs_error_estimate: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRatioSweep {
    pub pairs: usize,
    pub violations: usize,
    /// Largest observed `lhs/rhs`.
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub checks: Vec<BoundCheck>,
    pub log_ratio: LogRatioSweep,
    pub violations: usize,
    pub all_pass: bool,
}

fn within_bound(value: f64, bound: f64) -> bool {
    value <= bound * (1.0 + BOUND_RELATIVE_SLACK)
}

fn random_direction<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

fn log_ratio_sweep(pairs: usize, seed: u64) -> Result<LogRatioSweep> {
    let mut rng = rng::stream(seed, u64::MAX);
    let mut violations = 0;
    let mut max_ratio: f64 = 0.0;
    let mut done = 0;
    while done < pairs {
        let dim = if rng.random::<bool>() { 3 } else { 2 };
        let vr = 10f64.powf(rng.random_range(-3.0..3.0));
        let vdir = random_direction(&mut rng, dim);
        let v: Vec<f64> = vdir.iter().map(|c| c * vr).collect();
        let u: Vec<f64> = if rng.random_range(0..4) == 0 {
            // Near cancellation: u ≈ −v.
            let delta = 10f64.powf(rng.random_range(-6.0..0.0)) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let jitter = random_direction(&mut rng, dim);
            v.iter()
                .zip(&jitter)
                .map(|(c, j)| -c * (1.0 + delta) + 1e-3 * delta.abs() * vr * j)
                .collect()
        } else {
            let ur = vr * 10f64.powf(rng.random_range(-3.0..3.0));
            random_direction(&mut rng, dim).iter().map(|c| c * ur).collect()
        };
        let (u, v) = (SpatialPoint::new(&u)?, SpatialPoint::new(&v)?);
        if u.add(&v).is_origin() {
            continue;
        }
        let (lhs, rhs) = log_ratio_sides(&u, &v)?;
        if !kernel_math::log_ratio_inequality_holds(&u, &v)? {
            violations += 1;
        }
        if rhs > 0.0 {
            max_ratio = max_ratio.max(lhs / rhs);
        }
        done += 1;
    }
    Ok(LogRatioSweep {
        pairs,
        violations,
        max_ratio,
    })
}

/// Sweeps the singular-moment bound, the occupation bound for `|y−x|⁻¹`
/// and the logarithmic ratio inequality.
pub fn bounds_suite(grid: &BoundsGrid, tol: Tolerance) -> Result<BoundsReport> {
    let mut checks = Vec::new();
    for dim in [2usize, 3] {
        let alphas = if dim == 2 { &grid.alphas_2d } else { &grid.alphas_3d };
        for &alpha in alphas {
            for &r in &grid.radii {
                let x = anchor(dim, r)?;
                let bound = singular_kernel_bound(&x, alpha)?;
                for &t in &grid.times {
                    let q = singular_kernel_moment(t, &x, alpha, tol)?;
                    checks.push(BoundCheck {
                        check: "singular_moment".into(),
                        dim,
                        t,
                        radius: r,
                        alpha,
                        value: q.value,
                        abs_error_estimate: q.abs_error_estimate,
                        bound,
                        pass: within_bound(q.value, bound),
                    });
                }
            }
        }
        for &t in &grid.occupation_times {
            let bound = 2.0 / (dim as f64 - 1.0) * bm_abs_moment(t, dim)?;
            for &r in &grid.occupation_radii {
                let x = if r == 0.0 { SpatialPoint::origin(dim)? } else { anchor(dim, r)? };
                let q = occupation_singular_integral(t, &x, 1.0, tol)?;
                checks.push(BoundCheck {
                    check: "occupation_inverse_distance".into(),
                    dim,
                    t,
                    radius: r,
                    alpha: 1.0,
                    value: q.value,
                    abs_error_estimate: q.abs_error_estimate,
                    bound,
                    pass: within_bound(q.value, bound),
                });
            }
        }
    }
    let log_ratio = log_ratio_sweep(grid.log_ratio_pairs, grid.seed)?;
    let violations = checks.iter().filter(|c| !c.pass).count() + log_ratio.violations;
    Ok(BoundsReport {
        checks,
        log_ratio,
        violations,
        all_pass: violations == 0,
    })
}

// ---------------------------------------------------------------------------
// Moment calibration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MomentsSpec {
    pub dim: usize,
    pub t: f64,
    pub functions: Vec<TestFunction>,
    pub settings: EnsembleSettings,
}

impl Default for MomentsSpec {
    fn default() -> Self {
        MomentsSpec {
            dim: 3,
            t: 1.0,
            functions: vec![
                TestFunction::constant(1.0),
                TestFunction::gaussian(SpatialPoint::origin(3).expect("valid dimension"), 1.0),
            ],
            settings: EnsembleSettings {
                replicas: 1000,
                ..EnsembleSettings::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub function: String,
    pub mc: EnsembleSummary,
    pub oracle_mean: f64,
    pub mean_ok: bool,
    pub mc_second_moment: f64,
    pub second_moment_std_error: f64,
    pub oracle_second_moment: f64,
    pub second_moment_ok: bool,
    pub oracle_variance: f64,
    pub variance_ratio: f64,
    pub variance_std_error: f64,
    pub variance_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsReport {
    pub spec: MomentsSpec,
    pub rows: Vec<MomentRow>,
    pub extinct_fraction: f64,
    pub all_pass: bool,
}

pub struct MomentsRun {
    pub report: MomentsReport,
    /// `samples[i][r]` is `X_t(fᵢ)` on replica `r`.
    pub samples: Vec<Vec<f64>>,
}

pub fn run_moments(spec: &MomentsSpec, tol: Tolerance) -> Result<MomentsRun> {
    spec.settings.validate()?;
    check_times(&[spec.t])?;
    if spec.functions.is_empty() {
        return Err(Error::Config("no test functions given".into()));
    }
    let mut config = spec.settings.sim_config(spec.dim, spec.t);
    for f in &spec.functions {
        f.validate(Some(spec.dim))?;
        config.observables.push(Observable::point(*f));
    }
    let trajectories = particle_sim::simulate_ensemble(&config, spec.settings.replicas, spec.settings.threads)?;
    let samples: Vec<Vec<f64>> = (0..spec.functions.len())
        .map(|i| trajectories.iter().map(|t| t.terminal[i]).collect())
        .collect();
    let mut rows = Vec::new();
    for (f, s) in spec.functions.iter().zip(&samples) {
        let mc = stats::summarize(s)?;
        let squares: Vec<f64> = s.iter().map(|v| v * v).collect();
        let sq = stats::summarize(&squares)?;
        let first = moment_oracle::first_moment(f, spec.t, tol)?.value;
        let second = moment_oracle::second_moment(f, spec.t, tol)?.value;
        let oracle_variance = second - first * first;
        let variance_ratio = mc.variance / oracle_variance;
        let second_moment_ok = (sq.mean - second).abs() <= MOMENT_TOLERANCE * second.abs();
        rows.push(MomentRow {
            function: f.to_string(),
            mc,
            oracle_mean: first,
            mean_ok: mc.mean_within(first, 3.0),
            mc_second_moment: sq.mean,
            second_moment_std_error: sq.std_error,
            oracle_second_moment: second,
            second_moment_ok,
            oracle_variance,
            variance_ratio,
            variance_std_error: stats::variance_std_error(s).unwrap_or(f64::NAN) / oracle_variance,
            variance_ok: (variance_ratio - 1.0).abs() <= MOMENT_TOLERANCE,
        });
    }
    let extinct = trajectories.iter().filter(|t| t.final_count == 0).count();
    let all_pass = rows.iter().all(|r| r.mean_ok && r.second_moment_ok && r.variance_ok);
    Ok(MomentsRun {
        report: MomentsReport {
            spec: spec.clone(),
            rows,
            extinct_fraction: extinct as f64 / trajectories.len() as f64,
            all_pass,
        },
        samples,
    })
}

// ---------------------------------------------------------------------------
// Local-time ensembles

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalTimeSpec {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Anchor distances `|x|`; anchors are placed on the first axis.
    pub radii: Vec<f64>,
    pub epsilon: EpsilonRule,
    /// Functionals read at `t/2`; empty means the default Gaussian probes.
    pub companions: Vec<TestFunction>,
    pub settings: EnsembleSettings,
}

impl Default for LocalTimeSpec {
    fn default() -> Self {
        LocalTimeSpec {
            dim: 3,
            times: vec![1.0],
            radii: vec![0.3, 0.2, 0.1],
            epsilon: EpsilonRule::Auto,
            companions: Vec::new(),
            settings: EnsembleSettings::default(),
        }
    }
}

/// Three Gaussian probes: scale ½ and 1 at the origin, scale 1 at `e₁`.
pub fn default_companions(dim: usize) -> Result<Vec<TestFunction>> {
    let o = SpatialPoint::origin(dim)?;
    Ok(vec![
        TestFunction::gaussian(o, 0.5),
        TestFunction::gaussian(o, 1.0),
        TestFunction::gaussian(anchor(dim, 1.0)?, 1.0),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub radius: f64,
    pub point: SpatialPoint,
    pub epsilon: f64,
}

pub struct LocalTimeRun {
    pub spec: LocalTimeSpec,
    pub config: Arc<SimConfig>,
    pub anchors: Vec<Anchor>,
    pub companions: Vec<TestFunction>,
    pub trajectories: Vec<Trajectory>,
}

impl LocalTimeSpec {
    pub fn validate(&self) -> Result<()> {
        self.settings.validate()?;
        check_times(&self.times)?;
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::Config(format!("dimension must be 2 or 3, got {}", self.dim)));
        }
        if self.radii.is_empty() || self.radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::Config("anchor distances must be positive".into()));
        }
        if let EpsilonRule::Fixed(e) = self.epsilon {
            if !(e > 0.0) {
                return Err(Error::Config(format!("epsilon must be positive, got {e}")));
            }
        }
        Ok(())
    }

    /// Simulation config with every observable the analyses need.
    pub fn sim_config(&self) -> Result<(SimConfig, Vec<Anchor>, Vec<TestFunction>)> {
        self.validate()?;
        let t_max = self.times.iter().cloned().fold(0.0, f64::max);
        let mut config = self.settings.sim_config(self.dim, t_max);
        let mut anchors = Vec::new();
        for &r in &self.radii {
            let point = anchor(self.dim, r)?;
            let epsilon = self.epsilon.width(&point);
            estimator::register(&mut config, &estimator::tanaka_observables(&point, epsilon));
            anchors.push(Anchor { radius: r, point, epsilon });
        }
        let companions = if self.companions.is_empty() {
            default_companions(self.dim)?
        } else {
            self.companions.clone()
        };
        let obs: Vec<Observable> = companions.iter().map(|f| Observable::point(*f)).collect();
        estimator::register(&mut config, &obs);
        let mut snaps: Vec<f64> = self.times.iter().flat_map(|&t| [0.5 * t, t]).collect();
        snaps.sort_by(f64::total_cmp);
        snaps.dedup_by(|a, b| config.steps_to(*a) == config.steps_to(*b));
        config.snapshot_times = snaps;
        config.validate()?;
        Ok((config, anchors, companions))
    }
}

pub fn run_local_time(spec: &LocalTimeSpec) -> Result<LocalTimeRun> {
    let (config, anchors, companions) = spec.sim_config()?;
    let trajectories = particle_sim::simulate_ensemble(&config, spec.settings.replicas, spec.settings.threads)?;
    Ok(LocalTimeRun {
        spec: spec.clone(),
        config: Arc::new(config),
        anchors,
        companions,
        trajectories,
    })
}

/// Mollified local time: Monte Carlo against `∫₀ᵗ p_{s+ε}(x) ds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeMean {
    pub mc: EnsembleSummary,
    pub oracle: f64,
    pub within_3se: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TanakaEntry {
    pub dim: usize,
    pub t: f64,
    pub radius: f64,
    pub epsilon: f64,
    pub local_time: LocalTimeMean,
    pub residual: EnsembleSummary,
    pub residual_mean_ok: bool,
    pub isometry_ratio_std_error: f64,
    /// Expected quadratic variation of `φ_x` (`d = 3`) or `g_x` (`d = 2`).
    pub qv_oracle: f64,
    pub isometry_ratio: f64,
    pub isometry_ok: bool,
    /// Exact variance of the residual at this `ε` for super-Brownian motion.
    pub exact_residual_variance: f64,
    /// `d = 3`: `c₃² ∫₀ᵗ X_s(|·−x|⁻²) ds` across replicas.
    pub qv_integral: Option<EnsembleSummary>,
    pub max_cross_relation_residual: Option<f64>,
    pub cross_relation_ok: Option<bool>,
    /// `d = 3`: martingale of the logarithmic identity.
    pub log_martingale: Option<EnsembleSummary>,
    pub log_martingale_mean_ok: Option<bool>,
    /// `d = 2`: `E X_t(g_x) − log|x|`, the expectation of `L/c₂` as `ε → 0`.
    pub log_drift_oracle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TanakaReport {
    pub entries: Vec<TanakaEntry>,
    pub clamp_count: u64,
    pub all_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanionRow {
    pub function: String,
    pub outcome: ProbeOutcome,
    /// Exact correlation of `L` and the functional for super-Brownian motion.
    pub exact_correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Entry {
    pub t: f64,
    pub radius: f64,
    pub epsilon: f64,
    pub psi: f64,
    pub z: EnsembleSummary,
    pub oracle_mean: f64,
    pub mean_ok: bool,
    /// `E[M(φ_x)]_t / ψ²`.
    pub oracle_variance: f64,
    pub variance_ratio: f64,
    pub variance_ok: bool,
    /// Exact `Var z` at this `ε` for super-Brownian motion.
    pub exact_variance: f64,
    pub qv_ratio_mc: f64,
    pub qv_ratio_oracle: f64,
    pub normality: NormalityReport,
    pub ks_ok: bool,
    pub companions: Vec<CompanionRow>,
    pub independence_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub entries: Vec<Theorem1Entry>,
    /// `|ratio − 1|` strictly decreases as `|x|` decreases, per time.
    pub qv_trend_ok: bool,
    pub decorrelation: Vec<DecorrelationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Row {
    pub radius: f64,
    pub epsilon: f64,
    pub centered: EnsembleSummary,
    pub oracle_centered_mean: f64,
    /// `(Var L + (E L − c₂ log 1/|x|)²)^{1/2}`, an upper bound on `E|centered|`.
    pub oracle_abs_upper: f64,
    pub local_time: LocalTimeMean,
    pub growth_ratio: f64,
    pub growth_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Entry {
    pub t: f64,
    pub rows: Vec<Theorem2Row>,
    pub boundedness: BoundednessReport,
    /// Mean local time increases as `|x|` decreases.
    pub growth_monotone: bool,
    pub all_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub entries: Vec<Theorem2Entry>,
    pub all_pass: bool,
}

/// One replica's decomposition at one anchor and time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRow {
    pub replica: u64,
    pub t: f64,
    pub radius: f64,
    pub epsilon: f64,
    pub local_time: f64,
    /// `c₃/|x|` in `d = 3`, `log|x|` in `d = 2`.
    pub reference_term: f64,
    /// `X_t(φ_x)` in `d = 3`, `X_t(g_x)` in `d = 2`.
    pub terminal_term: f64,
    pub martingale_residual: f64,
    pub qv_integral: Option<f64>,
    pub z_value: Option<f64>,
    pub centered: Option<f64>,
}

impl LocalTimeRun {
    fn column<F>(&self, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&Trajectory) -> Result<f64>,
    {
        self.trajectories.iter().map(f).collect()
    }

    fn local_time_mean(&self, a: &Anchor, t: f64, samples: &[f64], tol: Tolerance) -> Result<LocalTimeMean> {
        let mc = stats::summarize(samples)?;
        let oracle = mollified_local_time_mean(t, a.radius, a.epsilon, self.spec.dim, tol)?.value;
        Ok(LocalTimeMean {
            mc,
            oracle,
            within_3se: mc.mean_within(oracle, 3.0),
        })
    }

    pub fn clamp_count(&self) -> u64 {
        self.trajectories.iter().map(|t| t.clamp_count).sum()
    }

    pub fn replica_rows(&self) -> Result<Vec<ReplicaRow>> {
        let mut rows = Vec::new();
        for &t in &self.spec.times {
            for a in &self.anchors {
                for traj in &self.trajectories {
                    let row = if self.spec.dim == 3 {
                        let d = estimator::tanaka_3d_at(traj, &a.point, a.epsilon, t)?;
                        let z = if a.radius < 1.0 {
                            Some((d.local_time - d.green_term) / psi(a.radius)?)
                        } else {
                            None
                        };
                        ReplicaRow {
                            replica: traj.replica,
                            t,
                            radius: a.radius,
                            epsilon: a.epsilon,
                            local_time: d.local_time,
                            reference_term: d.green_term,
                            terminal_term: d.terminal_phi,
                            martingale_residual: d.martingale_residual,
                            qv_integral: Some(d.qv_integral),
                            z_value: z,
                            centered: None,
                        }
                    } else {
                        let d = estimator::tanaka_2d_at(traj, &a.point, a.epsilon, t)?;
                        ReplicaRow {
                            replica: traj.replica,
                            t,
                            radius: a.radius,
                            epsilon: a.epsilon,
                            local_time: d.local_time,
                            reference_term: d.delta_term,
                            terminal_term: d.terminal_g,
                            martingale_residual: d.martingale_residual,
                            qv_integral: None,
                            z_value: None,
                            centered: Some(d.local_time - C2 * (1.0 / a.radius).ln()),
                        }
                    };
                    rows.push(row);
                }
            }
        }
        Ok(rows)
    }

    pub fn tanaka_report(&self, tol: Tolerance) -> Result<TanakaReport> {
        let dim = self.spec.dim;
        let mut entries = Vec::new();
        for &t in &self.spec.times {
            for a in &self.anchors {
                let x = &a.point;
                let lt = self.column(|tr| estimator::mollified_local_time_at(tr, x, a.epsilon, t))?;
                let local_time = self.local_time_mean(a, t, &lt, tol)?;
                let exact_residual_variance = moment_oracle::tanaka_residual_variance(t, x, a.epsilon, tol)?.value;
                let entry = if dim == 3 {
                    let dec = self
                        .trajectories
                        .iter()
                        .map(|tr| estimator::tanaka_3d_at(tr, x, a.epsilon, t))
                        .collect::<Result<Vec<_>>>()?;
                    let logs = self
                        .trajectories
                        .iter()
                        .map(|tr| estimator::log_identity_check_3d_at(tr, x, t))
                        .collect::<Result<Vec<_>>>()?;
                    let residuals: Vec<f64> = dec.iter().map(|d| d.martingale_residual).collect();
                    let qv: Vec<f64> = dec.iter().map(|d| d.qv_integral).collect();
                    let log_m: Vec<f64> = logs.iter().map(|l| l.martingale).collect();
                    let max_cross = logs.iter().map(|l| l.cross_relation_residual).fold(0.0, f64::max);
                    let log_summary = stats::summarize(&log_m)?;
                    let qv_oracle = moment_oracle::qv_expectation(&TestFunction::inverse_distance(*x), t, tol)?.value;
                    tanaka_entry(dim, t, a, local_time, &residuals, qv_oracle, exact_residual_variance)?
                        .with_3d(stats::summarize(&qv)?, max_cross, log_summary)
                } else {
                    let dec = self
                        .trajectories
                        .iter()
                        .map(|tr| estimator::tanaka_2d_at(tr, x, a.epsilon, t))
                        .collect::<Result<Vec<_>>>()?;
                    let residuals: Vec<f64> = dec.iter().map(|d| d.martingale_residual).collect();
                    let g = TestFunction::log_distance(*x);
                    let qv_oracle = moment_oracle::qv_expectation(&g, t, tol)?.value;
                    let mut e = tanaka_entry(dim, t, a, local_time, &residuals, qv_oracle, exact_residual_variance)?;
                    e.log_drift_oracle = Some(moment_oracle::first_moment(&g, t, tol)?.value - a.radius.ln());
                    e
                };
                entries.push(entry);
            }
        }
        let all_pass = entries.iter().all(|e| {
            e.local_time.within_3se
                && e.residual_mean_ok
                && e.isometry_ok
                && e.cross_relation_ok.unwrap_or(true)
                && e.log_martingale_mean_ok.unwrap_or(true)
        });
        Ok(TanakaReport {
            entries,
            clamp_count: self.clamp_count(),
            all_pass,
        })
    }

    pub fn theorem1_report(&self, tol: Tolerance) -> Result<Theorem1Report> {
        if self.spec.dim != 3 {
            return Err(Error::Config(format!(
                "the fluctuation analysis needs d=3, config has d={}",
                self.spec.dim
            )));
        }
        if let Some(a) = self.anchors.iter().find(|a| a.radius >= 1.0) {
            return Err(Error::Config(format!("fluctuation analysis needs |x| < 1, got {}", a.radius)));
        }
        let mut entries = Vec::new();
        let mut decorrelation = Vec::new();
        let mut qv_trend_ok = true;
        for &t in &self.spec.times {
            let half = 0.5 * t;
            let companion_vars = self
                .companions
                .iter()
                .map(|f| moment_oracle::variance(f, half, tol))
                .collect::<Result<Vec<f64>>>()?;
            let mut z_columns: Vec<(f64, Vec<f64>)> = Vec::new();
            let mut gaps = Vec::new();
            let mut order: Vec<&Anchor> = self.anchors.iter().collect();
            order.sort_by(|a, b| b.radius.total_cmp(&a.radius));
            for a in order {
                let x = &a.point;
                let samples = self
                    .trajectories
                    .iter()
                    .map(|tr| estimator::fluctuation_statistic(tr, x, a.epsilon, t, &self.companions, half))
                    .collect::<Result<Vec<_>>>()?;
                let z: Vec<f64> = samples.iter().map(|s| s.z_value).collect();
                let functionals: Vec<Vec<f64>> = (0..self.companions.len())
                    .map(|i| samples.iter().map(|s| s.companion_functionals[i]).collect())
                    .collect();
                let scale = psi(a.radius)?;
                let zs = stats::summarize(&z)?;
                let lt_mean = mollified_local_time_mean(t, a.radius, a.epsilon, 3, tol)?.value;
                let oracle_mean = (lt_mean - kernel_math::C3 / a.radius) / scale;
                let qv = moment_oracle::qv_expectation(&TestFunction::inverse_distance(*x), t, tol)?.value;
                let oracle_variance = qv / (scale * scale);
                let var_l = moment_oracle::local_time_variance(t, x, a.epsilon, tol)?.value;
                let log_scale = C31 * (1.0 / a.radius).ln();
                let qv_mc = self
                    .trajectories
                    .iter()
                    .map(|tr| estimator::tanaka_3d_at(tr, x, a.epsilon, t).map(|d| d.qv_integral))
                    .collect::<Result<Vec<f64>>>()?;
                let qv_ratio_mc = stats::summarize(&qv_mc)?.mean / log_scale;
                gaps.push((qv_ratio_mc - 1.0).abs());
                let normality = stats::ks_against_normal(&z, oracle_mean, oracle_variance)?;
                let outcomes = stats::independence_probe(&z, &functionals)?;
                let mut companions = Vec::new();
                for ((f, outcome), var_f) in self.companions.iter().zip(outcomes).zip(&companion_vars) {
                    let cov = moment_oracle::local_time_probe_covariance(t, x, a.epsilon, f, half, tol)
                        .map(|c| c.value)
                        .unwrap_or(f64::NAN);
                    companions.push(CompanionRow {
                        function: f.to_string(),
                        outcome,
                        exact_correlation: cov / (var_l * var_f).sqrt(),
                    });
                }
                let independence_ok = companions.iter().all(|c| match c.outcome {
                    ProbeOutcome::Estimated(CorrelationEstimate { ci_low, ci_high, .. }) => ci_low <= 0.0 && 0.0 <= ci_high,
                    ProbeOutcome::ZeroVariance => true,
                });
                let variance_ratio = zs.variance / oracle_variance;
                entries.push(Theorem1Entry {
                    t,
                    radius: a.radius,
                    epsilon: a.epsilon,
                    psi: scale,
                    z: zs,
                    oracle_mean,
                    mean_ok: zs.mean_within(oracle_mean, 3.0),
                    oracle_variance,
                    variance_ratio,
                    variance_ok: (variance_ratio - 1.0).abs() <= FLUCTUATION_VARIANCE_TOLERANCE,
                    exact_variance: var_l / (scale * scale),
                    qv_ratio_mc,
                    qv_ratio_oracle: qv / log_scale,
                    ks_ok: normality.ks_distance <= KS_THRESHOLD,
                    normality,
                    companions,
                    independence_ok,
                });
                z_columns.push((a.radius, z));
            }
            qv_trend_ok &= gaps.windows(2).all(|w| w[1] < w[0]);
            for w in z_columns.windows(2) {
                decorrelation.push(stats::decorrelation_report(w[0].0, &w[0].1, w[1].0, &w[1].1)?);
            }
        }
        Ok(Theorem1Report {
            entries,
            qv_trend_ok,
            decorrelation,
        })
    }

    pub fn theorem2_report(&self, tol: Tolerance) -> Result<Theorem2Report> {
        if self.spec.dim != 2 {
            return Err(Error::Config(format!(
                "the L1-boundedness analysis needs d=2, config has d={}",
                self.spec.dim
            )));
        }
        let mut order: Vec<&Anchor> = self.anchors.iter().collect();
        order.sort_by(|a, b| b.radius.total_cmp(&a.radius));
        let mut entries = Vec::new();
        for &t in &self.spec.times {
            let mut rows = Vec::new();
            let mut grid = Vec::new();
            for a in &order {
                let x = &a.point;
                let lt = self.column(|tr| estimator::mollified_local_time_at(tr, x, a.epsilon, t))?;
                let centered = self.column(|tr| estimator::centered_local_time_2d_at(tr, x, a.epsilon, t))?;
                let local_time = self.local_time_mean(a, t, &lt, tol)?;
                let shift = C2 * (1.0 / a.radius).ln();
                let oracle_centered_mean = local_time.oracle - shift;
                let var_l = moment_oracle::local_time_variance(t, x, a.epsilon, tol)?.value;
                let growth_ratio = local_time.mc.mean / local_time.oracle;
                rows.push(Theorem2Row {
                    radius: a.radius,
                    epsilon: a.epsilon,
                    centered: stats::summarize(&centered)?,
                    oracle_centered_mean,
                    oracle_abs_upper: (var_l + oracle_centered_mean * oracle_centered_mean).sqrt(),
                    local_time,
                    growth_ratio,
                    growth_ok: (growth_ratio - 1.0).abs() <= GROWTH_TOLERANCE,
                });
                grid.push((a.radius, centered));
            }
            let boundedness = stats::l1_boundedness_report(&grid, stats::DEFAULT_BOUNDEDNESS_FACTOR)?;
            let growth_monotone = rows.windows(2).all(|w| w[1].local_time.mc.mean > w[0].local_time.mc.mean);
            let all_pass = boundedness.bounded && growth_monotone && rows.iter().all(|r| r.growth_ok);
            entries.push(Theorem2Entry {
                t,
                rows,
                boundedness,
                growth_monotone,
                all_pass,
            });
        }
        let all_pass = entries.iter().all(|e| e.all_pass);
        Ok(Theorem2Report { entries, all_pass })
    }
}

fn tanaka_entry(
    dim: usize,
    t: f64,
    a: &Anchor,
    local_time: LocalTimeMean,
    residuals: &[f64],
    qv_oracle: f64,
    exact_residual_variance: f64,
) -> Result<TanakaEntry> {
    let residual = stats::summarize(residuals)?;
    let isometry_ratio = residual.variance / qv_oracle;
    Ok(TanakaEntry {
        dim,
        t,
        radius: a.radius,
        epsilon: a.epsilon,
        local_time,
        residual,
        residual_mean_ok: residual.mean_within(0.0, 3.0),
        isometry_ratio_std_error: stats::variance_std_error(residuals).unwrap_or(f64::NAN) / qv_oracle,
        qv_oracle,
        isometry_ratio,
        isometry_ok: (isometry_ratio - 1.0).abs() <= ISOMETRY_TOLERANCE,
        exact_residual_variance,
        qv_integral: None,
        max_cross_relation_residual: None,
        cross_relation_ok: None,
        log_martingale: None,
        log_martingale_mean_ok: None,
        log_drift_oracle: None,
    })
}

impl TanakaEntry {
    fn with_3d(mut self, qv: EnsembleSummary, max_cross: f64, log_m: EnsembleSummary) -> Self {
        self.qv_integral = Some(qv);
        self.max_cross_relation_residual = Some(max_cross);
        self.cross_relation_ok = Some(max_cross <= CROSS_RELATION_TOLERANCE);
        self.log_martingale_mean_ok = Some(log_m.mean_within(0.0, 3.0));
        self.log_martingale = Some(log_m);
        self
    }
}

/// Run-to-extinction summary: extinction times and total occupation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionSummary {
    pub extinct: usize,
    pub replicas: usize,
    pub extinction_time: Option<EnsembleSummary>,
}

pub fn extinction_summary(trajectories: &[Trajectory]) -> Result<ExtinctionSummary> {
    let times: Vec<f64> = trajectories.iter().filter_map(|t| t.extinct_at).collect();
    Ok(ExtinctionSummary {
        extinct: times.len(),
        replicas: trajectories.len(),
        extinction_time: if times.is_empty() { None } else { Some(stats::summarize(&times)?) },
    })
}

/// Convenience: a fixed-horizon or run-to-extinction simulation config.
pub fn simulation_config(dim: usize, horizon: Horizon, settings: &EnsembleSettings) -> SimConfig {
    let mut c = settings.sim_config(dim, 1.0);
    c.horizon = horizon;
    c
}
