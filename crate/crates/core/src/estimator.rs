//! Local times, Tanaka decompositions and fluctuation statistics read off
//! simulated trajectories.
//!
//! Martingale terms are never simulated; they are the residuals left after
//! subtracting the other terms of each decomposition from the mollified local
//! time. Every functional used here must be registered as an observable
//! before the run, see [`tanaka_observables`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel_math::{SpatialPoint, C2, C3, C31};
use crate::particle_sim::{cloud_integral, Horizon, Observable, ParticleCloud, SimConfig, Trajectory};
use crate::test_function::TestFunction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TanakaDecomposition3D {
    pub x: SpatialPoint,
    pub epsilon: f64,
    pub local_time: f64,
    /// `c₃/|x|`.
    pub green_term: f64,
    /// `X_t(φ_x)`.
    pub terminal_phi: f64,
    /// `M_t(φ_x) = L − c₃/|x| + X_t(φ_x)`.
    pub martingale_residual: f64,
    /// `c₃² ∫₀ᵗ X_s(|·−x|⁻²) ds`.
    pub qv_integral: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TanakaDecomposition2D {
    pub x: SpatialPoint,
    pub epsilon: f64,
    pub local_time: f64,
    /// `X_t(g_x)`.
    pub terminal_g: f64,
    /// `δ₀(g_x) = log|x|`.
    pub delta_term: f64,
    /// `M_t(g_x) = X_t(g_x) − log|x| − πL`.
    pub martingale_residual: f64,
}

/// Terms of the logarithmic identity in `d = 3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogIdentityCheck {
    /// `M_t(g_x) = X_t(g_x) − log|x| − ½∫₀ᵗ X_s(|·−x|⁻²) ds`.
    pub martingale: f64,
    /// `c₃² ∫₀ᵗ X_s(|·−x|⁻²) ds`.
    pub qv_integral: f64,
    /// `|qv − 2c₃²(X_t(g_x) − log|x| − M_t(g_x))| / |qv|`.
    pub cross_relation_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationSample {
    pub x: SpatialPoint,
    pub t: f64,
    pub epsilon: f64,
    /// `(L − c₃/|x|)/ψ(|x|)`.
    pub z_value: f64,
    /// `X_s(fᵢ)` for the companion functionals, in the order requested.
    pub companion_functionals: Vec<f64>,
}

/// `ψ(|x|) = (c₃₁ log(1/|x|))^{1/2}`, defined for `0 < |x| < 1`.
pub fn psi(r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain(format!("ψ needs 0 < |x| < 1, got {r}")));
    }
    Ok((C31 * (1.0 / r).ln()).sqrt())
}

/// Default mollifier width `(|x|/4)²`.
pub fn auto_epsilon(x: &SpatialPoint) -> f64 {
    let r = x.norm();
    r * r / 16.0
}

/// Observables needed by the decompositions at anchor `x`.
///
/// * `d = 3`: `p_ε^x` and `|·−x|⁻²` accumulated, `φ_x` and `g_x` at the end.
/// * `d = 2`: `p_ε^x` accumulated, `g_x` at the end.
pub fn tanaka_observables(x: &SpatialPoint, epsilon: f64) -> Vec<Observable> {
    let mut out = vec![
        Observable::occupation(TestFunction::heat_kernel_probe(*x, epsilon)),
        Observable::point(TestFunction::log_distance(*x)),
    ];
    if x.dim() == 3 {
        out.push(Observable::occupation(TestFunction::inverse_square(*x)));
        out.push(Observable::point(TestFunction::inverse_distance(*x)));
    }
    out
}

/// Adds observables to `config`, skipping ones already present. An existing
/// point observable is upgraded when occupation is requested.
pub fn register(config: &mut SimConfig, observables: &[Observable]) {
    for o in observables {
        match config.observables.iter_mut().find(|e| e.function == o.function) {
            Some(e) => e.occupation |= o.occupation,
            None => config.observables.push(*o),
        }
    }
}

/// `X(φ) = (1/N) Σ φ(yᵢ)`, with singular evaluations clamped.
pub fn measure_integral(cloud: &ParticleCloud, phi: &TestFunction) -> f64 {
    let mut clamps = 0;
    measure_integral_counted(cloud, phi, &mut clamps)
}

/// As [`measure_integral`], adding the number of clamped evaluations to `clamps`.
pub fn measure_integral_counted(cloud: &ParticleCloud, phi: &TestFunction, clamps: &mut u64) -> f64 {
    if cloud.is_extinct() {
        return 0.0;
    }
    cloud_integral(cloud, phi, clamps)
}

fn occupation_index(traj: &Trajectory, f: &TestFunction) -> Result<usize> {
    traj.config
        .find(f, true)
        .ok_or_else(|| Error::Usage(format!("{f} was not accumulated during the run")))
}

fn point_index(traj: &Trajectory, f: &TestFunction) -> Result<usize> {
    traj.config
        .find(f, false)
        .ok_or_else(|| Error::Usage(format!("{f} was not registered as an observable")))
}

/// The horizon of a fixed-time run, or the final time of a run to extinction.
fn horizon_time(traj: &Trajectory) -> f64 {
    match traj.config.horizon {
        Horizon::Fixed { t_max } => t_max,
        Horizon::Extinction { .. } => traj.final_time,
    }
}

fn is_final_time(traj: &Trajectory, t: f64) -> bool {
    let cfg = &traj.config;
    let k = cfg.steps_to(t);
    let fin = cfg.steps_to(traj.final_time);
    k == fin || (traj.extinct_at.is_some() && k > fin)
}

fn occupation_at(traj: &Trajectory, idx: usize, t: f64) -> Result<f64> {
    let limit = traj.config.horizon.limit();
    if t > limit + 0.5 * traj.config.dt {
        return Err(Error::Domain(format!("time {t} beyond the horizon {limit}")));
    }
    let value = if is_final_time(traj, t) {
        traj.occupation[idx]
    } else {
        traj.snapshot_at(t)
            .ok_or_else(|| Error::Usage(format!("no snapshot at time {t}")))?
            .occupation[idx]
    };
    value.ok_or_else(|| Error::Usage("observable has no occupation accumulator".into()))
}

fn value_at(traj: &Trajectory, idx: usize, t: f64) -> Result<f64> {
    if is_final_time(traj, t) {
        return Ok(traj.terminal[idx]);
    }
    Ok(traj
        .snapshot_at(t)
        .ok_or_else(|| Error::Usage(format!("no snapshot at time {t}")))?
        .values[idx])
}

/// `∫₀ᵗ X_s(p_ε^x) ds` at the end of the run.
pub fn mollified_local_time(traj: &Trajectory, x: &SpatialPoint, epsilon: f64) -> Result<f64> {
    let idx = occupation_index(traj, &TestFunction::heat_kernel_probe(*x, epsilon))?;
    traj.occupation[idx].ok_or_else(|| Error::Usage("missing accumulator".into()))
}

/// `∫₀ᵗ X_s(p_ε^x) ds` at a snapshot time or the final time.
pub fn mollified_local_time_at(traj: &Trajectory, x: &SpatialPoint, epsilon: f64, t: f64) -> Result<f64> {
    let idx = occupation_index(traj, &TestFunction::heat_kernel_probe(*x, epsilon))?;
    occupation_at(traj, idx, t)
}

fn require_dim(traj: &Trajectory, x: &SpatialPoint, d: usize) -> Result<()> {
    if traj.config.dim != d || x.dim() != d {
        return Err(Error::Usage(format!(
            "decomposition needs d={d}, got trajectory d={} and anchor d={}",
            traj.config.dim,
            x.dim()
        )));
    }
    if x.is_origin() {
        return Err(Error::Domain("anchor must differ from the origin".into()));
    }
    Ok(())
}

pub fn tanaka_3d(traj: &Trajectory, x: &SpatialPoint, epsilon: f64) -> Result<TanakaDecomposition3D> {
    tanaka_3d_at(traj, x, epsilon, horizon_time(traj))
}

/// As [`tanaka_3d`] at a snapshot time `t`.
pub fn tanaka_3d_at(traj: &Trajectory, x: &SpatialPoint, epsilon: f64, t: f64) -> Result<TanakaDecomposition3D> {
    require_dim(traj, x, 3)?;
    let local_time = mollified_local_time_at(traj, x, epsilon, t)?;
    let inv_sq = occupation_index(traj, &TestFunction::inverse_square(*x))?;
    let phi = point_index(traj, &TestFunction::inverse_distance(*x))?;
    let green_term = C3 / x.norm();
    let terminal_phi = value_at(traj, phi, t)?;
    Ok(TanakaDecomposition3D {
        x: *x,
        epsilon,
        local_time,
        green_term,
        terminal_phi,
        martingale_residual: local_time - green_term + terminal_phi,
        qv_integral: C3 * C3 * occupation_at(traj, inv_sq, t)?,
    })
}

pub fn tanaka_2d(traj: &Trajectory, x: &SpatialPoint, epsilon: f64) -> Result<TanakaDecomposition2D> {
    tanaka_2d_at(traj, x, epsilon, horizon_time(traj))
}

/// As [`tanaka_2d`] at a snapshot time `t`.
pub fn tanaka_2d_at(traj: &Trajectory, x: &SpatialPoint, epsilon: f64, t: f64) -> Result<TanakaDecomposition2D> {
    require_dim(traj, x, 2)?;
    let local_time = mollified_local_time_at(traj, x, epsilon, t)?;
    let g = point_index(traj, &TestFunction::log_distance(*x))?;
    let terminal_g = value_at(traj, g, t)?;
    let delta_term = x.norm().ln();
    Ok(TanakaDecomposition2D {
        x: *x,
        epsilon,
        local_time,
        terminal_g,
        delta_term,
        martingale_residual: terminal_g - delta_term - local_time / C2,
    })
}

pub fn log_identity_check_3d(traj: &Trajectory, x: &SpatialPoint) -> Result<LogIdentityCheck> {
    log_identity_check_3d_at(traj, x, horizon_time(traj))
}

pub fn log_identity_check_3d_at(traj: &Trajectory, x: &SpatialPoint, t: f64) -> Result<LogIdentityCheck> {
    require_dim(traj, x, 3)?;
    let g = point_index(traj, &TestFunction::log_distance(*x))?;
    let inv_sq = occupation_index(traj, &TestFunction::inverse_square(*x))?;
    let occ = occupation_at(traj, inv_sq, t)?;
    let terminal_g = value_at(traj, g, t)?;
    let delta = x.norm().ln();
    let martingale = terminal_g - delta - 0.5 * occ;
    let qv_integral = C3 * C3 * occ;
    let rebuilt = 2.0 * C3 * C3 * (terminal_g - delta - martingale);
    let cross_relation_residual = if qv_integral == 0.0 {
        rebuilt.abs()
    } else {
        ((qv_integral - rebuilt) / qv_integral).abs()
    };
    Ok(LogIdentityCheck {
        martingale,
        qv_integral,
        cross_relation_residual,
    })
}

/// `(L_t − c₃/|x|)/ψ(|x|)` together with companion functionals read at the
/// snapshot `companion_time`.
pub fn fluctuation_statistic(
    traj: &Trajectory,
    x: &SpatialPoint,
    epsilon: f64,
    t: f64,
    companions: &[TestFunction],
    companion_time: f64,
) -> Result<FluctuationSample> {
    require_dim(traj, x, 3)?;
    let scale = psi(x.norm())?;
    let local_time = mollified_local_time_at(traj, x, epsilon, t)?;
    let companion_functionals = companions
        .iter()
        .map(|f| value_at(traj, point_index(traj, f)?, companion_time))
        .collect::<Result<Vec<f64>>>()?;
    Ok(FluctuationSample {
        x: *x,
        t,
        epsilon,
        z_value: (local_time - C3 / x.norm()) / scale,
        companion_functionals,
    })
}

/// `L − c₂ log(1/|x|)` in `d = 2`.
pub fn centered_local_time_2d(traj: &Trajectory, x: &SpatialPoint, epsilon: f64) -> Result<f64> {
    centered_local_time_2d_at(traj, x, epsilon, horizon_time(traj))
}

pub fn centered_local_time_2d_at(traj: &Trajectory, x: &SpatialPoint, epsilon: f64, t: f64) -> Result<f64> {
    require_dim(traj, x, 2)?;
    Ok(mollified_local_time_at(traj, x, epsilon, t)? - C2 * (1.0 / x.norm()).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particle_sim::{init, simulate};

    fn config3(x: &SpatialPoint, eps: f64) -> SimConfig {
        let mut c = SimConfig::new(3, 200, 0.5, 17).with_snapshots(&[0.25]);
        register(&mut c, &tanaka_observables(x, eps));
        register(&mut c, &[Observable::point(TestFunction::gaussian(SpatialPoint::origin(3).unwrap(), 1.0))]);
        c
    }

    #[test]
    fn measure_integral_basics() {
        let c = SimConfig::new(2, 100, 1.0, 1);
        let mut cloud = init(&c).unwrap();
        let x = SpatialPoint::on_axis(2, 0.4).unwrap();
        assert!((measure_integral(&cloud, &TestFunction::log_distance(x)) - 0.4f64.ln()).abs() < 1e-12);
        assert!((measure_integral(&cloud, &TestFunction::constant(2.0)) - 2.0).abs() < 1e-12);
        cloud.positions.clear();
        assert_eq!(measure_integral(&cloud, &TestFunction::constant(2.0)), 0.0);
    }

    #[test]
    fn registration_deduplicates() {
        let x = SpatialPoint::on_axis(3, 0.2).unwrap();
        let mut c = SimConfig::new(3, 10, 1.0, 1);
        register(&mut c, &[Observable::point(TestFunction::inverse_square(x))]);
        register(&mut c, &tanaka_observables(&x, 0.01));
        register(&mut c, &tanaka_observables(&x, 0.01));
        assert_eq!(c.observables.len(), 4);
        assert!(c.observables[0].occupation);
    }

    #[test]
    fn decompositions_are_consistent() {
        let x = SpatialPoint::on_axis(3, 0.2).unwrap();
        let eps = auto_epsilon(&x);
        let traj = simulate(&config3(&x, eps)).unwrap();
        let d = tanaka_3d(&traj, &x, eps).unwrap();
        assert!(d.local_time >= 0.0 && d.qv_integral >= 0.0);
        assert_eq!(d.martingale_residual, d.local_time - d.green_term + d.terminal_phi);
        let check = log_identity_check_3d(&traj, &x).unwrap();
        assert!(check.cross_relation_residual < 1e-10);
        let half = mollified_local_time_at(&traj, &x, eps, 0.25).unwrap();
        assert!(half <= d.local_time);
        let z = fluctuation_statistic(
            &traj,
            &x,
            eps,
            0.5,
            &[TestFunction::gaussian(SpatialPoint::origin(3).unwrap(), 1.0)],
            0.25,
        )
        .unwrap();
        assert!((z.z_value - (d.local_time - d.green_term) / psi(0.2).unwrap()).abs() < 1e-12);
        assert_eq!(z.companion_functionals.len(), 1);
    }

    #[test]
    fn missing_observables_are_usage_errors() {
        let x = SpatialPoint::on_axis(3, 0.2).unwrap();
        let traj = simulate(&SimConfig::new(3, 20, 0.1, 1)).unwrap();
        assert!(matches!(mollified_local_time(&traj, &x, 0.01), Err(Error::Usage(_))));
        assert!(matches!(tanaka_3d(&traj, &x, 0.01), Err(Error::Usage(_))));
        let y = SpatialPoint::on_axis(2, 0.2).unwrap();
        assert!(matches!(tanaka_2d(&traj, &y, 0.01), Err(Error::Usage(_))));
    }

    #[test]
    fn psi_domain() {
        assert!(psi(1.0).is_err());
        assert!(psi(0.0).is_err());
        assert!((psi(0.1).unwrap().powi(2) - C31 * 10f64.ln()).abs() < 1e-15);
        let x = SpatialPoint::on_axis(3, 1.5).unwrap();
        let traj = simulate(&config3(&x, 0.01)).unwrap();
        assert!(matches!(
            fluctuation_statistic(&traj, &x, 0.01, 0.5, &[], 0.25),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn centered_local_time_at_unit_distance_is_local_time() {
        let x = SpatialPoint::on_axis(2, 1.0).unwrap();
        let mut c = SimConfig::new(2, 100, 0.3, 2);
        register(&mut c, &tanaka_observables(&x, 0.05));
        let traj = simulate(&c).unwrap();
        let l = mollified_local_time(&traj, &x, 0.05).unwrap();
        assert_eq!(centered_local_time_2d(&traj, &x, 0.05).unwrap(), l);
        let d = tanaka_2d(&traj, &x, 0.05).unwrap();
        assert_eq!(d.delta_term, 0.0);
    }
}
