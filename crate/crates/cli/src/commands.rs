use std::path::PathBuf;

use serde::Serialize;

use sbm_core::estimator;
use sbm_core::experiment::{self, ExtinctionSummary, LocalTimeRun, MomentsReport};
use sbm_core::particle_sim;
use sbm_core::stats::{self, EnsembleSummary};
use sbm_core::Tolerance;

use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::output::{fmt17, fmt_opt, Table, Writer};

/// Files written plus one-line status messages.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

fn tol() -> Tolerance {
    Tolerance::default()
}

pub fn bounds(config: &ExperimentConfig) -> CliResult<Outcome> {
    config.validate()?;
    let report = experiment::bounds_suite(&config.bounds, tol())?;
    let mut w = Writer::new("bounds", config)?;
    w.json("bounds.json", &report)?;
    let mut table = Table::new(&["check", "dim", "t", "radius", "alpha", "value", "abs_error_estimate", "bound", "pass"]);
    for c in &report.checks {
        table.push(vec![
            c.check.clone(),
            c.dim.to_string(),
            fmt17(c.t),
            fmt17(c.radius),
            fmt17(c.alpha),
            fmt17(c.value),
            fmt17(c.abs_error_estimate),
            fmt17(c.bound),
            c.pass.to_string(),
        ]);
    }
    w.csv("bounds.csv", &table)?;
    let summary = vec![format!(
        "bounds: {} grid checks, {} log-ratio pairs, {} violations",
        report.checks.len(),
        report.log_ratio.pairs,
        report.violations
    )];
    Ok(Outcome { files: w.finish(), summary })
}

pub fn moments(config: &ExperimentConfig) -> CliResult<Outcome> {
    config.validate()?;
    let functions = config.test_functions()?;
    let mut reports: Vec<MomentsReport> = Vec::new();
    let mut header = vec!["t".to_string(), "replica".to_string()];
    header.extend(functions.iter().map(|f| f.to_string()));
    let mut table = Table::new(&header);
    for &t in &config.t_list {
        let run = experiment::run_moments(&config.moments_spec(t)?, tol())?;
        for r in 0..config.replicas {
            let mut row = vec![fmt17(t), r.to_string()];
            row.extend(run.samples.iter().map(|s| fmt17(s[r])));
            table.push(row);
        }
        reports.push(run.report);
    }
    let mut w = Writer::new("moments", config)?;
    w.json("moments.json", &reports)?;
    w.csv("moments_samples.csv", &table)?;
    let summary = reports
        .iter()
        .map(|r| format!("moments t={}: all_pass={}", r.spec.t, r.all_pass))
        .collect();
    Ok(Outcome { files: w.finish(), summary })
}

pub fn tanaka(config: &ExperimentConfig) -> CliResult<Outcome> {
    config.validate_anchors()?;
    let run = experiment::run_local_time(&config.local_time_spec())?;
    let report = run.tanaka_report(tol())?;
    let mut table = Table::new(&[
        "replica",
        "t",
        "radius",
        "epsilon",
        "local_time",
        "reference_term",
        "terminal_term",
        "martingale_residual",
        "qv_integral",
        "z_value",
        "centered",
    ]);
    for r in run.replica_rows()? {
        table.push(vec![
            r.replica.to_string(),
            fmt17(r.t),
            fmt17(r.radius),
            fmt17(r.epsilon),
            fmt17(r.local_time),
            fmt17(r.reference_term),
            fmt17(r.terminal_term),
            fmt17(r.martingale_residual),
            fmt_opt(r.qv_integral),
            fmt_opt(r.z_value),
            fmt_opt(r.centered),
        ]);
    }
    let stem = format!("tanaka_d{}", config.dim);
    let mut w = Writer::new("tanaka", config)?;
    w.json(&format!("{stem}.json"), &report)?;
    w.csv(&format!("{stem}_replicas.csv"), &table)?;
    let summary = report
        .entries
        .iter()
        .map(|e| {
            format!(
                "tanaka d={} t={} |x|={}: residual mean {:.4e} (se {:.2e}), isometry ratio {:.4}",
                e.dim, e.t, e.radius, e.residual.mean, e.residual.std_error, e.isometry_ratio
            )
        })
        .collect();
    Ok(Outcome { files: w.finish(), summary })
}

pub fn theorem1(config: &ExperimentConfig) -> CliResult<Outcome> {
    config.validate_theorem1()?;
    let run = experiment::run_local_time(&config.local_time_spec())?;
    let report = run.theorem1_report(tol())?;
    let table = fluctuation_table(&run)?;
    let mut w = Writer::new("theorem1", config)?;
    w.json("theorem1.json", &report)?;
    w.csv("theorem1_samples.csv", &table)?;
    let summary = report
        .entries
        .iter()
        .map(|e| {
            format!(
                "theorem1 t={} |x|={}: z mean {:.4} (oracle {:.4}), variance ratio {:.3}, KS {:.4}",
                e.t, e.radius, e.z.mean, e.oracle_mean, e.variance_ratio, e.normality.ks_distance
            )
        })
        .collect();
    Ok(Outcome { files: w.finish(), summary })
}

fn fluctuation_table(run: &LocalTimeRun) -> CliResult<Table> {
    let mut header: Vec<String> = ["replica", "t", "radius", "epsilon", "z_value"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(run.companions.iter().map(|f| format!("{f} at t/2")));
    let mut table = Table::new(&header);
    for &t in &run.spec.times {
        for a in &run.anchors {
            for traj in &run.trajectories {
                let s = estimator::fluctuation_statistic(traj, &a.point, a.epsilon, t, &run.companions, 0.5 * t)?;
                let mut row = vec![
                    traj.replica.to_string(),
                    fmt17(t),
                    fmt17(a.radius),
                    fmt17(a.epsilon),
                    fmt17(s.z_value),
                ];
                row.extend(s.companion_functionals.iter().map(|v| fmt17(*v)));
                table.push(row);
            }
        }
    }
    Ok(table)
}

pub fn theorem2(config: &ExperimentConfig) -> CliResult<Outcome> {
    config.validate_theorem2()?;
    let run = experiment::run_local_time(&config.local_time_spec())?;
    let report = run.theorem2_report(tol())?;
    let mut table = Table::new(&["replica", "t", "radius", "epsilon", "local_time", "centered"]);
    for r in run.replica_rows()? {
        table.push(vec![
            r.replica.to_string(),
            fmt17(r.t),
            fmt17(r.radius),
            fmt17(r.epsilon),
            fmt17(r.local_time),
            fmt_opt(r.centered),
        ]);
    }
    let mut w = Writer::new("theorem2", config)?;
    w.json("theorem2.json", &report)?;
    w.csv("theorem2_replicas.csv", &table)?;
    let summary = report
        .entries
        .iter()
        .map(|e| {
            format!(
                "theorem2 t={}: widened ratio {:.3}, bounded={}, growth monotone={}",
                e.t, e.boundedness.widened_ratio, e.boundedness.bounded, e.growth_monotone
            )
        })
        .collect();
    Ok(Outcome { files: w.finish(), summary })
}

#[derive(Debug, Serialize)]
struct SnapshotSummary {
    time: f64,
    function: String,
    values: EnsembleSummary,
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    extinction: ExtinctionSummary,
    mass: Vec<SnapshotMass>,
    snapshots: Vec<SnapshotSummary>,
    clamp_count: u64,
}

#[derive(Debug, Serialize)]
struct SnapshotMass {
    time: f64,
    mass: EnsembleSummary,
}

pub fn simulate(config: &ExperimentConfig) -> CliResult<Outcome> {
    config.validate()?;
    let sim = config.simulation()?;
    let trajs = particle_sim::simulate_ensemble(&sim, config.replicas, config.threads)?;
    let functions = config.test_functions()?;
    let mut snapshots = Vec::new();
    let mut mass = Vec::new();
    for (k, &time) in sim.snapshot_times.iter().enumerate() {
        let m: Vec<f64> = trajs.iter().map(|t| t.snapshots[k].mass).collect();
        mass.push(SnapshotMass {
            time,
            mass: stats::summarize(&m)?,
        });
        for (i, f) in functions.iter().enumerate() {
            let v: Vec<f64> = trajs.iter().map(|t| t.snapshots[k].values[i]).collect();
            snapshots.push(SnapshotSummary {
                time,
                function: f.to_string(),
                values: stats::summarize(&v)?,
            });
        }
    }
    let report = SimulateReport {
        extinction: experiment::extinction_summary(&trajs)?,
        mass,
        snapshots,
        clamp_count: trajs.iter().map(|t| t.clamp_count).sum(),
    };
    let mut header: Vec<String> = ["replica", "final_time", "final_count", "extinct_at", "clamp_count"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(functions.iter().map(|f| format!("{f} at final time")));
    let mut table = Table::new(&header);
    for t in &trajs {
        let mut row = vec![
            t.replica.to_string(),
            fmt17(t.final_time),
            t.final_count.to_string(),
            fmt_opt(t.extinct_at),
            t.clamp_count.to_string(),
        ];
        row.extend(t.terminal.iter().map(|v| fmt17(*v)));
        table.push(row);
    }
    let mut w = Writer::new("simulate", config)?;
    w.json("simulate.json", &report)?;
    w.csv("simulate_replicas.csv", &table)?;
    let summary = vec![format!(
        "simulate: {} replicas, {} extinct",
        report.extinction.replicas, report.extinction.extinct
    )];
    Ok(Outcome { files: w.finish(), summary })
}
