//! Exact expectations for super-Brownian motion started at `δ₀`.
//!
//! With `X₀ = δ₀` the first two moments are
//!
//! ```text
//! E X_t(φ)   = P_tφ(0)
//! E X_t(φ)²  = (P_tφ(0))² + ∫₀ᵗ P_s((P_{t-s}φ)²)(0) ds
//! E[M(φ)]_t  = ∫₀ᵗ P_s(φ²)(0) ds
//! ```
//!
//! All supported test functions are radial about a centre, so every spatial
//! integral is a one-dimensional radial quadrature (see
//! [`kernel_math::radial_expectation`]). The semigroup `P_Tφ` is used in
//! closed form for the Gaussian kinds and by quadrature for the singular ones.
//!
//! The second half of the module holds oracles for the mollified local time
//! `L = ∫₀ᵗ X_s(p_ε^x) ds`: its variance, the variance of the Tanaka
//! residuals, and its covariance with `X_{t₁}(f)` for Gaussian `f`. They all
//! follow from the occupation-time formula
//! `Cov(Y_t(f), Y_t(g)) = ∫₀ᵗ P_r[(∫₀^{t-r} P_u f du)(∫₀^{t-r} P_u g du)](0) dr`.

use std::cell::Cell;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::kernel_math::{
    self, heat_kernel_radial, heat_kernel_time_integral, integrate_nested, radial_expectation,
    special::exp_integral_e1, QuadratureResult, SpatialPoint, Tolerance, C3,
};
use crate::test_function::TestFunction;

/// First and second moments and expected quadratic variation of `X_t(φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub first: QuadratureResult,
    pub second: QuadratureResult,
    pub qv: QuadratureResult,
}

impl MomentReport {
    pub fn variance(&self) -> f64 {
        self.second.value - self.first.value * self.first.value
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be positive and finite, got {t}")))
    }
}

fn center_distance(phi: &TestFunction) -> f64 {
    phi.center().map(|c| c.norm()).unwrap_or(0.0)
}

fn dim_of(phi: &TestFunction) -> usize {
    phi.dim().unwrap_or(3)
}

/// Runs `f` inside a closure that must return plain `f64`, keeping the first
/// error for later.
struct ErrorSlot(Cell<Option<Error>>);

impl ErrorSlot {
    fn new() -> Self {
        ErrorSlot(Cell::new(None))
    }

    fn value(&self, r: Result<QuadratureResult>) -> f64 {
        match r {
            Ok(q) => q.value,
            Err(e) => {
                self.0.set(Some(e));
                f64::NAN
            }
        }
    }

    fn check<T>(&self, r: Result<T>) -> Result<T> {
        match self.0.take() {
            Some(e) => Err(e),
            None => r,
        }
    }
}

/// `P_Tφ` at distance `rho` from the centre of `φ`.
pub fn semigroup(phi: &TestFunction, t: f64, rho: f64, tol: Tolerance) -> Result<QuadratureResult> {
    if t < 0.0 {
        return Err(Error::Domain("semigroup time must be >= 0".into()));
    }
    let d = dim_of(phi);
    match *phi {
        TestFunction::Constant { value } => Ok(QuadratureResult::exact(value)),
        TestFunction::Gaussian { scale, .. } => {
            let w = scale * scale + t;
            Ok(QuadratureResult::exact(
                (scale * scale / w).powf(0.5 * d as f64) * (-rho * rho / (2.0 * w)).exp(),
            ))
        }
        TestFunction::HeatKernelProbe { epsilon, .. } => {
            Ok(QuadratureResult::exact(heat_kernel_radial(t + epsilon, rho * rho, d)))
        }
        TestFunction::InverseDistance { .. } if d == 3 => {
            Ok(QuadratureResult::exact(inverse_distance_semigroup_3d(rho, t)))
        }
        TestFunction::LogDistance { .. } if d == 2 => {
            Ok(QuadratureResult::exact(log_distance_semigroup_2d(rho, t)))
        }
        _ => {
            if phi.singularity_order() >= d as f64 {
                return Err(Error::Domain(format!("{phi} is not locally integrable in d={d}")));
            }
            radial_expectation(d, t, rho, |r| phi.radial_profile(r), tol)
        }
    }
}

/// `E X_t(φ) = P_tφ(0)`.
pub fn first_moment(phi: &TestFunction, t: f64, tol: Tolerance) -> Result<QuadratureResult> {
    check_time(t)?;
    phi.validate(None).map_err(|e| Error::Domain(e.to_string()))?;
    semigroup(phi, t, center_distance(phi), tol)
}

fn second_moment_time_breaks(t: f64, scale: f64) -> Vec<f64> {
    let mut pts = kernel_math::time_breaks(0.0, t, scale);
    if scale > 0.0 {
        for k in -4..=1 {
            let p = t - scale * 10f64.powi(k);
            if p > 0.0 && p < t {
                pts.push(p);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// `E X_t(φ)² = (P_tφ(0))² + ∫₀ᵗ P_s((P_{t-s}φ)²)(0) ds`.
pub fn second_moment(phi: &TestFunction, t: f64, tol: Tolerance) -> Result<QuadratureResult> {
    check_time(t)?;
    phi.validate(None).map_err(|e| Error::Domain(e.to_string()))?;
    if let TestFunction::Constant { value } = *phi {
        return Ok(QuadratureResult::exact(value * value * (1.0 + t)));
    }
    let d = dim_of(phi);
    let alpha = phi.singularity_order();
    if alpha >= d as f64 || 2.0 * alpha >= d as f64 + 2.0 {
        return Err(Error::Domain(format!(
            "second moment of {phi} diverges in d={d} (singularity order {alpha})"
        )));
    }
    let a = center_distance(phi);
    let first = semigroup(phi, t, a, tol)?;
    let middle = tol.inner();
    let innermost = middle.inner();
    let slot = ErrorSlot::new();
    let worst = Cell::new(0.0f64);
    let evals = Cell::new(0usize);
    let scale = if phi.is_singular() { a * a } else { 0.0 };
    let breaks = second_moment_time_breaks(t, scale);
    let integral = kernel_math::integrate_with_breaks(
        |s| {
            let r = radial_expectation(
                d,
                s,
                a,
                |rho| {
                    let v = slot.value(semigroup(phi, t - s, rho, innermost));
                    v * v
                },
                middle,
            );
            if let Ok(q) = &r {
                worst.set(worst.get().max(q.abs_error_estimate));
                evals.set(evals.get() + q.evaluations);
            }
            slot.value(r)
        },
        &breaks,
        tol,
    );
    let integral = slot.check(integral)?;
    Ok(QuadratureResult {
        value: first.value * first.value + integral.value,
        abs_error_estimate: 2.0 * first.value.abs() * first.abs_error_estimate
            + integral.abs_error_estimate
            + worst.get() * t,
        evaluations: evals.get() + first.evaluations,
    })
}

/// `E[M(φ)]_t = ∫₀ᵗ P_s(φ²)(0) ds`.
pub fn qv_expectation(phi: &TestFunction, t: f64, tol: Tolerance) -> Result<QuadratureResult> {
    check_time(t)?;
    phi.validate(None).map_err(|e| Error::Domain(e.to_string()))?;
    if let TestFunction::Constant { value } = *phi {
        return Ok(QuadratureResult::exact(value * value * t));
    }
    let d = dim_of(phi);
    if 2.0 * phi.singularity_order() >= d as f64 {
        return Err(Error::Domain(format!("the square of {phi} is not integrable in d={d}")));
    }
    let a = center_distance(phi);
    let scale = if phi.is_singular() { a * a } else { 0.0 };
    integrate_nested(
        |s| {
            radial_expectation(
                d,
                s,
                a,
                |rho| {
                    let v = phi.radial_profile(rho);
                    v * v
                },
                tol.inner(),
            )
        },
        0.0,
        t,
        scale,
        tol,
    )
}

pub fn moment_report(phi: &TestFunction, t: f64, tol: Tolerance) -> Result<MomentReport> {
    Ok(MomentReport {
        first: first_moment(phi, t, tol)?,
        second: second_moment(phi, t, tol)?,
        qv: qv_expectation(phi, t, tol)?,
    })
}

// ---------------------------------------------------------------------------
// Mollified local time oracles

fn check_anchor(x: &SpatialPoint, epsilon: f64) -> Result<(usize, f64)> {
    let a = x.norm();
    if a == 0.0 {
        return Err(Error::Singular("anchor must differ from the origin".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Domain("mollifier width must be positive".into()));
    }
    Ok((x.dim(), a))
}

/// `∫₀^T P_u p_ε^x du` at distance `rho` from `x`, i.e. `∫_ε^{T+ε} p_u(ρ) du`.
pub fn mollified_green(rho: f64, horizon: f64, epsilon: f64, d: usize) -> f64 {
    heat_kernel_time_integral(rho, epsilon, horizon + epsilon, d)
}

/// `P_T φ_x` at distance `rho` from `x` in `d = 3`: `c₃ erf(ρ/√2T)/ρ`.
pub fn inverse_distance_semigroup_3d(rho: f64, horizon: f64) -> f64 {
    if horizon == 0.0 {
        return C3 / rho;
    }
    C3 * erf(rho / (2.0 * horizon).sqrt()) / rho
}

/// `P_T g_x` at distance `rho` from `x` in `d = 2`: `log ρ + E₁(ρ²/2T)/2`.
pub fn log_distance_semigroup_2d(rho: f64, horizon: f64) -> f64 {
    if horizon == 0.0 {
        return rho.ln();
    }
    rho.ln() + 0.5 * exp_integral_e1(rho * rho / (2.0 * horizon))
}

fn occupation_quadratic<F>(t: f64, a: f64, d: usize, bracket: F, tol: Tolerance) -> Result<QuadratureResult>
where
    F: Fn(f64, f64) -> f64,
{
    integrate_nested(
        |r| {
            let horizon = t - r;
            radial_expectation(
                d,
                r,
                a,
                |rho| {
                    let v = bracket(rho, horizon);
                    v * v
                },
                tol.inner(),
            )
        },
        0.0,
        t,
        a * a,
        tol,
    )
}

/// `Var ∫₀ᵗ X_s(p_ε^x) ds`.
pub fn local_time_variance(t: f64, x: &SpatialPoint, epsilon: f64, tol: Tolerance) -> Result<QuadratureResult> {
    check_time(t)?;
    let (d, a) = check_anchor(x, epsilon)?;
    occupation_quadratic(t, a, d, |rho, h| mollified_green(rho, h, epsilon, d), tol)
}

/// Variance of the Tanaka residual built from the mollified local time.
///
/// * `d = 3`: `L − c₃/|x| + X_t(φ_x)`
/// * `d = 2`: `X_t(g_x) − log|x| − πL`
///
/// As `ε → 0` both reduce to `E[M]_t`, the expected quadratic variation of
/// `φ_x` resp. `g_x`.
pub fn tanaka_residual_variance(t: f64, x: &SpatialPoint, epsilon: f64, tol: Tolerance) -> Result<QuadratureResult> {
    check_time(t)?;
    let (d, a) = check_anchor(x, epsilon)?;
    match d {
        3 => occupation_quadratic(
            t,
            a,
            d,
            |rho, h| mollified_green(rho, h, epsilon, 3) + inverse_distance_semigroup_3d(rho, h),
            tol,
        ),
        _ => occupation_quadratic(
            t,
            a,
            d,
            |rho, h| log_distance_semigroup_2d(rho, h) - PI * mollified_green(rho, h, epsilon, 2),
            tol,
        ),
    }
}

/// `Cov(∫₀ᵗ X_s(p_ε^x) ds, X_{t₁}(f))` for a Gaussian `f` and `t₁ ≤ t`.
pub fn local_time_probe_covariance(
    t: f64,
    x: &SpatialPoint,
    epsilon: f64,
    probe: &TestFunction,
    t1: f64,
    tol: Tolerance,
) -> Result<QuadratureResult> {
    check_time(t)?;
    check_time(t1)?;
    if t1 > t {
        return Err(Error::Domain("probe time must not exceed the local-time horizon".into()));
    }
    let (d, _) = check_anchor(x, epsilon)?;
    let TestFunction::Gaussian { center, scale } = *probe else {
        return Err(Error::Domain("covariance oracle needs a Gaussian probe".into()));
    };
    if center.dim() != d {
        return Err(Error::Domain("probe and anchor dimensions differ".into()));
    }
    let df = d as f64;
    let s2 = scale * scale;
    let c_sq = center.norm_sq();
    integrate_nested(
        |r| {
            // p_r(y)·P_{t1-r}f(y) is a multiple of a Gaussian density with
            // variance r' and mean m.
            let w = s2 + t1 - r;
            let weight = (s2 / w).powf(0.5 * df)
                * (w / (r + w)).powf(0.5 * df)
                * (-c_sq / (2.0 * (r + w))).exp();
            let r_eff = r * w / (r + w);
            let m = center.scale(r / (r + w));
            let a_eff = x.distance(&m);
            let horizon = t - r;
            radial_expectation(d, r_eff, a_eff, |rho| mollified_green(rho, horizon, epsilon, d), tol.inner())
                .map(|q| q.scaled(weight))
        },
        0.0,
        t1,
        x.norm_sq(),
        tol,
    )
}

/// `Var X_t(f)` from the first two moments.
pub fn variance(phi: &TestFunction, t: f64, tol: Tolerance) -> Result<f64> {
    let first = first_moment(phi, t, tol)?;
    let second = second_moment(phi, t, tol)?;
    Ok(second.value - first.value * first.value)
}
