//! Deterministic analytic layer: Gaussian heat kernels, Green functions,
//! singular-moment quadrature and explicit bounds.
//!
//! Every spatial integral against a Gaussian is reduced to a one-dimensional
//! integral in the radial coordinate `ρ = |y - x|` centred at the anchor `x`.
//! For `y ~ N(0, tI)` the density of `ρ` has a closed form:
//!
//! * `d = 3`: `(ρ/a) (2πt)^{-1/2} [e^{-(ρ-a)²/2t} - e^{-(ρ+a)²/2t}]`
//! * `d = 2`: `(ρ/t) e^{-(ρ-a)²/2t} · e^{-aρ/t} I₀(aρ/t)`
//!
//! with `a = |x|`. The singular ball `ρ < a/2` is always its own panel.

pub mod quadrature;
pub mod special;

use std::cell::Cell;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
pub use quadrature::{integrate, integrate_semi_infinite, integrate_with_breaks, QuadratureResult, Tolerance};
use special::{bessel_i0e, exp_integral_e1};

/// `c₃ = 1/2π`, the Green-function constant in three dimensions.
pub const C3: f64 = 1.0 / (2.0 * PI);
/// `c₃₁ = 2c₃² = 1/2π²`, the log-variance constant in three dimensions.
pub const C31: f64 = 2.0 * C3 * C3;
/// `c₂ = 1/π`, the logarithmic Green-function constant in two dimensions.
pub const C2: f64 = 1.0 / PI;

/// A point of `ℝ^d`, `d ∈ {2, 3}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct SpatialPoint {
    coords: [f64; 3],
    dim: u8,
}

impl SpatialPoint {
    pub fn new(coords: &[f64]) -> Result<Self> {
        check_dim(coords.len())?;
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("coordinates must be finite".into()));
        }
        let mut c = [0.0; 3];
        c[..coords.len()].copy_from_slice(coords);
        Ok(SpatialPoint {
            coords: c,
            dim: coords.len() as u8,
        })
    }

    pub fn origin(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(SpatialPoint {
            coords: [0.0; 3],
            dim: dim as u8,
        })
    }

    /// The point `r·e₁`.
    pub fn on_axis(dim: usize, r: f64) -> Result<Self> {
        let mut p = Self::origin(dim)?;
        if !r.is_finite() {
            return Err(Error::Domain("coordinates must be finite".into()));
        }
        p.coords[0] = r;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }

    /// Coordinates padded with zeros to length three.
    pub fn padded(&self) -> [f64; 3] {
        self.coords
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum()
    }

    pub fn is_origin(&self) -> bool {
        self.coords.iter().all(|&c| c == 0.0)
    }

    pub fn add(&self, other: &SpatialPoint) -> SpatialPoint {
        let mut c = self.coords;
        for (ci, o) in c.iter_mut().zip(other.coords.iter()) {
            *ci += o;
        }
        SpatialPoint { coords: c, dim: self.dim }
    }

    pub fn sub(&self, other: &SpatialPoint) -> SpatialPoint {
        let mut c = self.coords;
        for (ci, o) in c.iter_mut().zip(other.coords.iter()) {
            *ci -= o;
        }
        SpatialPoint { coords: c, dim: self.dim }
    }

    pub fn scale(&self, k: f64) -> SpatialPoint {
        let mut c = self.coords;
        for ci in c.iter_mut() {
            *ci *= k;
        }
        SpatialPoint { coords: c, dim: self.dim }
    }

    /// `|self - other|`
    pub fn distance(&self, other: &SpatialPoint) -> f64 {
        self.sub(other).norm()
    }
}

impl From<SpatialPoint> for Vec<f64> {
    fn from(p: SpatialPoint) -> Self {
        p.coords().to_vec()
    }
}

impl TryFrom<Vec<f64>> for SpatialPoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SpatialPoint::new(&v)
    }
}

pub(crate) fn check_dim(d: usize) -> Result<()> {
    if d == 2 || d == 3 {
        Ok(())
    } else {
        Err(Error::Domain(format!("dimension must be 2 or 3, got {d}")))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be positive and finite, got {t}")))
    }
}

/// Surface area of the unit sphere in `ℝ^d`.
pub fn sphere_area(d: usize) -> f64 {
    match d {
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => 2.0 * PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0),
    }
}

/// `p_t(r) = (2πt)^{-d/2} exp(-r²/2t)` as a function of `r = |y|`. No checks.
#[inline]
pub fn heat_kernel_radial(t: f64, r_sq: f64, d: usize) -> f64 {
    (2.0 * PI * t).powf(-0.5 * d as f64) * (-r_sq / (2.0 * t)).exp()
}

/// Transition density of `d`-dimensional Brownian motion, `p_t(y)`.
pub fn heat_kernel_density(t: f64, y: &SpatialPoint) -> Result<f64> {
    check_time(t)?;
    Ok(heat_kernel_radial(t, y.norm_sq(), y.dim()))
}

/// `c₃/|x|`, the Green function of `Δ/2` in three dimensions.
pub fn green_function_3d(x: &SpatialPoint) -> Result<f64> {
    if x.dim() != 3 {
        return Err(Error::Domain("the Green function c3/|x| is three-dimensional".into()));
    }
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::Singular("Green function evaluated at the origin".into()));
    }
    Ok(C3 / r)
}

/// Density of `|x + B_t|` at `ρ`, where `|x| = a` and `B` is `d`-dimensional.
pub fn radial_kernel(d: usize, t: f64, a: f64, rho: f64) -> f64 {
    if rho <= 0.0 {
        return 0.0;
    }
    match d {
        3 => {
            if a == 0.0 {
                rho * rho * (2.0 / PI).sqrt() * t.powf(-1.5) * (-rho * rho / (2.0 * t)).exp()
            } else {
                let gap = rho - a;
                (rho / a) / (2.0 * PI * t).sqrt()
                    * (-gap * gap / (2.0 * t)).exp()
                    * -(-2.0 * a * rho / t).exp_m1()
            }
        }
        2 => {
            let gap = rho - a;
            (rho / t) * (-gap * gap / (2.0 * t)).exp() * bessel_i0e(a * rho / t)
        }
        _ => f64::NAN,
    }
}

fn radial_breaks(t: f64, a: f64) -> Vec<f64> {
    let s = t.sqrt();
    let upper = a + 13.0 * s;
    let mut pts = vec![0.0, upper];
    if a > 0.0 {
        pts.push(0.5 * a);
        pts.push(a);
    }
    for k in [-6.0, -2.0, 2.0, 6.0] {
        pts.push(a + k * s);
    }
    if a == 0.0 {
        pts.push(s);
    }
    pts.retain(|p| *p >= 0.0 && *p <= upper);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// `E f(|x + B_t|) = ∫ p_t(y) f(|y - x|) dy` for `|x| = a`.
///
/// `f` may be singular at `ρ = 0` as long as `ρ^{d-1} f(ρ)` is integrable.
/// At `t = 0` the value is `f(a)`.
pub fn radial_expectation<F: FnMut(f64) -> f64>(
    d: usize,
    t: f64,
    a: f64,
    mut f: F,
    tol: Tolerance,
) -> Result<QuadratureResult> {
    check_dim(d)?;
    if t == 0.0 {
        return Ok(QuadratureResult::exact(f(a)));
    }
    check_time(t)?;
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("anchor distance must be finite and >= 0, got {a}")));
    }
    let breaks = radial_breaks(t, a);
    integrate_with_breaks(
        |rho| {
            let k = radial_kernel(d, t, a, rho);
            if k == 0.0 {
                0.0
            } else {
                k * f(rho)
            }
        },
        &breaks,
        tol,
    )
}

/// Break points for time integrals whose integrand changes character at
/// `s ≈ scale` (typically `scale = |x|²`).
pub(crate) fn time_breaks(t0: f64, t1: f64, scale: f64) -> Vec<f64> {
    let mut pts = vec![t0, t1];
    if scale > 0.0 {
        for k in -4..=4 {
            let p = scale * 10f64.powi(k);
            if p > t0 && p < t1 {
                pts.push(p);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Integrate `s ↦ inner(s)` over `[t0, t1]` where each `inner(s)` is itself a
/// quadrature. The reported error adds the largest inner error times the
/// interval length.
pub(crate) fn integrate_nested<F>(
    mut inner: F,
    t0: f64,
    t1: f64,
    scale: f64,
    tol: Tolerance,
) -> Result<QuadratureResult>
where
    F: FnMut(f64) -> Result<QuadratureResult>,
{
    let worst_inner = Cell::new(0.0f64);
    let evals = Cell::new(0usize);
    let failure: Cell<Option<Error>> = Cell::new(None);
    let breaks = time_breaks(t0, t1, scale);
    let outer = integrate_with_breaks(
        |s| match inner(s) {
            Ok(r) => {
                worst_inner.set(worst_inner.get().max(r.abs_error_estimate));
                evals.set(evals.get() + r.evaluations.max(1));
                r.value
            }
            Err(e) => {
                failure.set(Some(e));
                f64::NAN
            }
        },
        &breaks,
        tol,
    );
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let outer = outer?;
    Ok(QuadratureResult {
        value: outer.value,
        abs_error_estimate: outer.abs_error_estimate + worst_inner.get() * (t1 - t0),
        evaluations: evals.get(),
    })
}

/// `∫_lo^hi p_u(r) du` in closed form (`erfc` in `d = 3`, `E₁` in `d = 2`).
///
/// `lo = 0` is allowed when `r > 0`.
pub fn heat_kernel_time_integral(r: f64, lo: f64, hi: f64, d: usize) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    match d {
        3 => {
            if r == 0.0 {
                return (2.0 * PI).powf(-1.5) * 2.0 * (lo.powf(-0.5) - hi.powf(-0.5));
            }
            let u_hi = r / (2.0 * hi).sqrt();
            if lo == 0.0 {
                return erfc(u_hi) / (2.0 * PI * r);
            }
            let u_lo = r / (2.0 * lo).sqrt();
            let diff = if u_lo > 1.0 {
                erfc(u_hi) - erfc(u_lo)
            } else {
                erf(u_lo) - erf(u_hi)
            };
            diff / (2.0 * PI * r)
        }
        2 => {
            if r == 0.0 {
                return (hi / lo).ln() / (2.0 * PI);
            }
            let z_hi = r * r / (2.0 * hi);
            if lo == 0.0 {
                return exp_integral_e1(z_hi) / (2.0 * PI);
            }
            (exp_integral_e1(z_hi) - exp_integral_e1(r * r / (2.0 * lo))) / (2.0 * PI)
        }
        _ => f64::NAN,
    }
}

/// Closed form of `∫₀ᵗ p_s(x) ds`: `erfc(r/√2t)/(2πr)` in `d = 3`,
/// `E₁(r²/2t)/2π` in `d = 2`.
pub fn expected_local_time_closed_form(t: f64, r: f64, d: usize) -> Result<f64> {
    check_dim(d)?;
    check_time(t)?;
    if r <= 0.0 {
        return Err(Error::Singular("expected local time diverges at the origin".into()));
    }
    Ok(heat_kernel_time_integral(r, 0.0, t, d))
}

/// `E L_t^x = ∫₀ᵗ p_s(x) ds` by adaptive quadrature, `r = |x|`.
pub fn expected_local_time(t: f64, r: f64, d: usize, tol: Tolerance) -> Result<QuadratureResult> {
    check_dim(d)?;
    check_time(t)?;
    if !(r > 0.0) {
        return Err(Error::Singular("expected local time diverges at the origin".into()));
    }
    let breaks = time_breaks(0.0, t, r * r / d as f64);
    integrate_with_breaks(|s| heat_kernel_radial(s, r * r, d), &breaks, tol)
}

/// Mean of the mollified local time, `∫₀ᵗ p_{s+ε}(x) ds`, by quadrature.
pub fn mollified_local_time_mean(t: f64, r: f64, epsilon: f64, d: usize, tol: Tolerance) -> Result<QuadratureResult> {
    check_dim(d)?;
    check_time(t)?;
    check_time(epsilon)?;
    if !(r >= 0.0) {
        return Err(Error::Domain("anchor distance must be >= 0".into()));
    }
    let scale = (r * r / d as f64 - epsilon).max(0.0);
    let breaks = time_breaks(0.0, t, scale);
    integrate_with_breaks(|s| heat_kernel_radial(s + epsilon, r * r, d), &breaks, tol)
}

fn check_alpha(alpha: f64, d: usize) -> Result<()> {
    if alpha > 0.0 && alpha < d as f64 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0, {d}), got {alpha}")))
    }
}

/// `∫ p_t(y) |y - x|^{-α} dy` for `0 < α < d`.
pub fn singular_kernel_moment(t: f64, x: &SpatialPoint, alpha: f64, tol: Tolerance) -> Result<QuadratureResult> {
    let d = x.dim();
    check_alpha(alpha, d)?;
    check_time(t)?;
    radial_expectation(d, t, x.norm(), |rho| rho.powf(-alpha), tol)
}

/// `∫₀ᵗ ds ∫ p_s(y) |y - x|^{-α} dy`. Zero at `t = 0`.
pub fn occupation_singular_integral(t: f64, x: &SpatialPoint, alpha: f64, tol: Tolerance) -> Result<QuadratureResult> {
    let d = x.dim();
    check_alpha(alpha, d)?;
    if t == 0.0 {
        return Ok(QuadratureResult::exact(0.0));
    }
    check_time(t)?;
    let a = x.norm();
    if a == 0.0 && alpha >= 2.0 {
        return Err(Error::Singular(
            "occupation integral of |y|^-alpha from the origin diverges for alpha >= 2".into(),
        ));
    }
    let inner_tol = tol.inner();
    integrate_nested(
        |s| radial_expectation(d, s, a, |rho| rho.powf(-alpha), inner_tol),
        0.0,
        t,
        a * a,
        tol,
    )
}

/// `E|B_t| = √(2t) Γ((d+1)/2) / Γ(d/2)`.
pub fn bm_abs_moment(t: f64, d: usize) -> Result<f64> {
    check_dim(d)?;
    check_time(t)?;
    let df = d as f64;
    Ok((2.0 * t).sqrt() * gamma(0.5 * (df + 1.0)) / gamma(0.5 * df))
}

/// `C₀(d) = sup_{u ≥ 0} (u/2π)^{d/2} e^{-u/2}`, attained at `u = d`.
pub fn peak_constant(d: usize) -> f64 {
    let df = d as f64;
    (df / (2.0 * PI)).powf(0.5 * df) * (-0.5 * df).exp()
}

/// Constant in `∫ p_t(y)|y - x|^{-α} dy < C(α)/|x|^α`.
///
/// Splitting at `δ = |x|/2`: outside the ball the integrand is at most
/// `δ^{-α}`; inside, `p_t ≤ C₀(d)/δ^d` uniformly in `t`. This gives
/// `C(α) = 2^α (1 + ω_d C₀(d)/(d - α))` with `ω_d` the unit-sphere area.
/// For `d = 3` this is `2^α (1 + 4πC₀/(3-α))`; the `d = 2` constant follows
/// the same split.
pub fn singular_bound_constant(alpha: f64, d: usize) -> Result<f64> {
    check_dim(d)?;
    check_alpha(alpha, d)?;
    Ok(2f64.powf(alpha) * (1.0 + sphere_area(d) * peak_constant(d) / (d as f64 - alpha)))
}

/// Right-hand side `C(α)/|x|^α` of the singular-kernel bound.
pub fn singular_kernel_bound(x: &SpatialPoint, alpha: f64) -> Result<f64> {
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::Singular("bound is infinite at x = 0".into()));
    }
    Ok(singular_bound_constant(alpha, x.dim())? / r.powf(alpha))
}

/// Right-hand side `2/(d-1)·E|B_t|` of the occupation bound for `|y - x|^{-1}`.
pub fn occupation_inverse_distance_bound(t: f64, d: usize) -> Result<f64> {
    Ok(2.0 / (d as f64 - 1.0) * bm_abs_moment(t, d)?)
}

/// Both sides of `|log(|u+v|/|v|)| ≤ √(|u|/|v|) + √(|u|/|u+v|)`.
pub fn log_ratio_sides(u: &SpatialPoint, v: &SpatialPoint) -> Result<(f64, f64)> {
    if u.dim() != v.dim() {
        return Err(Error::Domain("u and v must have the same dimension".into()));
    }
    let nv = v.norm();
    let nw = u.add(v).norm();
    if nv == 0.0 || nw == 0.0 {
        return Err(Error::Domain("v and u + v must be nonzero".into()));
    }
    let nu = u.norm();
    let lhs = (nw / nv).ln().abs();
    let rhs = (nu / nv).sqrt() + (nu / nw).sqrt();
    Ok((lhs, rhs))
}

/// Evaluates the log-ratio inequality with `1e-12` slack.
pub fn log_ratio_inequality_holds(u: &SpatialPoint, v: &SpatialPoint) -> Result<bool> {
    let (lhs, rhs) = log_ratio_sides(u, v)?;
    Ok(lhs <= rhs + 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tight() -> Tolerance {
        Tolerance::new(1e-12, 1e-10)
    }

    #[test]
    fn constants() {
        assert_eq!(C31, 2.0 * C3 * C3);
        assert!((C31 - 1.0 / (2.0 * PI * PI)).abs() < 1e-17);
        assert!((C2 - 1.0 / PI).abs() < 1e-17);
    }

    #[test]
    fn heat_kernel_at_origin() {
        let o3 = SpatialPoint::origin(3).unwrap();
        assert!((heat_kernel_density(1.0, &o3).unwrap() - 0.063_493_635_934_240_97).abs() < 1e-15);
        let o2 = SpatialPoint::origin(2).unwrap();
        assert!((heat_kernel_density(2.0, &o2).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!(heat_kernel_density(0.0, &o2).is_err());
        assert!(heat_kernel_density(-1.0, &o2).is_err());
    }

    #[test]
    fn heat_kernel_integrates_to_one() {
        for d in [2usize, 3] {
            for t in [0.01f64, 0.1, 1.0, 10.0] {
                // Plain spherical shells around the origin, no radial kernel.
                let q = integrate_with_breaks(
                    |r| {
                        let y = SpatialPoint::on_axis(d, r).unwrap();
                        sphere_area(d) * r.powi(d as i32 - 1) * heat_kernel_density(t, &y).unwrap()
                    },
                    &[0.0, t.sqrt(), 4.0 * t.sqrt(), 40.0 * t.sqrt()],
                    tight(),
                )
                .unwrap();
                assert!((q.value - 1.0).abs() <= 1e-8, "d={d} t={t}: {}", q.value);
                // Shells around an arbitrary anchor through the radial kernel.
                for a in [0.0, 0.3, 5.0] {
                    let q = radial_expectation(d, t, a, |_| 1.0, tight()).unwrap();
                    assert!((q.value - 1.0).abs() <= 1e-8, "d={d} t={t} a={a}: {}", q.value);
                }
            }
        }
    }

    #[test]
    fn radial_kernel_small_anchor_limit_is_continuous() {
        for d in [2usize, 3] {
            let k0 = radial_kernel(d, 0.7, 0.0, 0.9);
            let k1 = radial_kernel(d, 0.7, 1e-9, 0.9);
            assert!((k0 - k1).abs() < 1e-8 * k0);
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        for d in [2usize, 3] {
            for &(s, t) in &[(0.1, 0.2), (0.5, 1.5), (2.0, 0.05)] {
                for z in [0.0, 0.4, 1.3] {
                    let q = radial_expectation(d, s, z, |rho| heat_kernel_radial(t, rho * rho, d), tight()).unwrap();
                    let want = heat_kernel_radial(s + t, z * z, d);
                    assert!((q.value - want).abs() <= 1e-6, "d={d} s={s} t={t} z={z}");
                }
            }
        }
    }

    #[test]
    fn green_function_values() {
        let x = SpatialPoint::on_axis(3, 1.0).unwrap();
        assert!((green_function_3d(&x).unwrap() - 0.159_154_943_091_895_35).abs() < 1e-15);
        let x = SpatialPoint::new(&[0.0, 0.06, 0.08]).unwrap();
        assert!((green_function_3d(&x).unwrap() - 1.591_549_430_918_953_5).abs() < 1e-14);
        assert!(matches!(
            green_function_3d(&SpatialPoint::origin(3).unwrap()),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn expected_local_time_closed_forms_match_quadrature() {
        for d in [2usize, 3] {
            for &t in &[0.01, 1.0, 7.0] {
                for &r in &[0.01, 0.1, 0.5, 2.0] {
                    let q = expected_local_time(t, r, d, tight()).unwrap();
                    let c = expected_local_time_closed_form(t, r, d).unwrap();
                    assert!((q.value - c).abs() <= 1e-9 * c.max(1e-300) + 1e-14, "d={d} t={t} r={r}: {} vs {c}", q.value);
                }
            }
        }
    }

    #[test]
    fn expected_local_time_examples() {
        let q = expected_local_time(1.0, 0.1, 3, Tolerance::default()).unwrap();
        assert!((q.value - 1.464_7).abs() < 1e-4, "{}", q.value);
        let q = expected_local_time(1.0, 0.1, 2, tight()).unwrap();
        assert!((q.value - exp_integral_e1(0.005) / (2.0 * PI)).abs() < 1e-10);
        // Long-time limit is the Green function; the gap is erf(r/√2t) ≈ 0.025·r at t = 1e3.
        let x = SpatialPoint::on_axis(3, 1e-3).unwrap();
        let q = expected_local_time(1e3, 1e-3, 3, tight()).unwrap();
        let g = green_function_3d(&x).unwrap();
        assert!(((q.value - g) / g).abs() < 1e-4, "{} vs {g}", q.value);
        assert!(matches!(expected_local_time(1.0, 0.0, 3, tight()), Err(Error::Singular(_))));
    }

    #[test]
    fn erfc_relation_in_three_dimensions() {
        for &(t, r) in &[(1.0f64, 0.2f64), (0.5, 0.05), (3.0, 1.0)] {
            let q = expected_local_time(t, r, 3, tight()).unwrap();
            let lhs = q.value * 2.0 * PI * r;
            let rhs = erfc(r / (2.0 * t).sqrt());
            assert!(((lhs - rhs) / rhs).abs() < 1e-6);
        }
    }

    #[test]
    fn heat_kernel_time_integral_matches_quadrature() {
        for d in [2usize, 3] {
            for &(r, lo, hi) in &[(0.2, 0.0025, 1.0025), (0.05, 1e-4, 0.5), (0.0, 0.01, 0.3), (1.5, 0.2, 0.21)] {
                let c = heat_kernel_time_integral(r, lo, hi, d);
                let q = integrate(|u| heat_kernel_radial(u, r * r, d), lo, hi, tight()).unwrap();
                assert!((c - q.value).abs() <= 1e-10 * q.value.abs() + 1e-15, "d={d} r={r}: {c} vs {}", q.value);
            }
        }
    }

    #[test]
    fn bm_abs_moment_values() {
        assert!((bm_abs_moment(1.0, 3).unwrap() - 2.0 * (2.0 / PI).sqrt()).abs() < 1e-13);
        assert!((bm_abs_moment(1.0, 2).unwrap() - (PI / 2.0).sqrt()).abs() < 1e-13);
        for d in [2, 3] {
            assert!((bm_abs_moment(4.0, d).unwrap() - 2.0 * bm_abs_moment(1.0, d).unwrap()).abs() < 1e-13);
        }
        assert!(bm_abs_moment(0.0, 3).is_err());
    }

    #[test]
    fn bm_abs_moment_monte_carlo() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(7);
        for d in [2usize, 3] {
            let n = 1_000_000;
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..n {
                let mut r2 = 0.0;
                for _ in 0..d {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    r2 += z * z;
                }
                let r = r2.sqrt();
                s += r;
                s2 += r * r;
            }
            let mean = s / n as f64;
            let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
            assert!((mean - bm_abs_moment(1.0, d).unwrap()).abs() < 3.0 * se);
        }
    }

    #[test]
    fn singular_moment_examples() {
        let x = SpatialPoint::on_axis(3, 0.5).unwrap();
        let q = singular_kernel_moment(1.0, &x, 1.0, Tolerance::default()).unwrap();
        assert!(q.value <= singular_bound_constant(1.0, 3).unwrap() / 0.5);
        // Only |x| matters.
        let xr = SpatialPoint::new(&[0.3, 0.0, 0.4]).unwrap();
        let qr = singular_kernel_moment(1.0, &xr, 1.0, Tolerance::default()).unwrap();
        assert!((q.value - qr.value).abs() < 1e-12);
        // Small-time limit.
        let x1 = SpatialPoint::on_axis(3, 1.0).unwrap();
        let q = singular_kernel_moment(1e-4, &x1, 2.0, Tolerance::default()).unwrap();
        assert!((q.value - 1.0).abs() < 1e-3);
        // Inverse distance against the erf closed form.
        for &(t, a) in &[(1.0, 0.5), (0.01, 0.3), (2.0, 3.0)] {
            let x = SpatialPoint::on_axis(3, a).unwrap();
            let q = singular_kernel_moment(t, &x, 1.0, tight()).unwrap();
            let want = erf(a / (2.0 * t).sqrt()) / a;
            assert!((q.value - want).abs() < 1e-9);
        }
        // Origin allowed: E|B_t|^{-α} = (2t)^{-α/2} Γ((d-α)/2)/Γ(d/2).
        let o = SpatialPoint::origin(2).unwrap();
        let q = singular_kernel_moment(0.5, &o, 1.0, tight()).unwrap();
        let want = 1.0f64.powf(-0.5) * gamma(0.5) / gamma(1.0);
        assert!((q.value - want).abs() < 1e-8, "{} vs {want}", q.value);
        assert!(singular_kernel_moment(1.0, &x, 3.0, tight()).is_err());
        assert!(singular_kernel_moment(1.0, &x, 0.0, tight()).is_err());
    }

    #[test]
    fn occupation_integral_bounds() {
        for d in [2usize, 3] {
            let x = SpatialPoint::on_axis(d, 0.2).unwrap();
            assert_eq!(occupation_singular_integral(0.0, &x, 1.0, tight()).unwrap().value, 0.0);
            let q = occupation_singular_integral(1.0, &x, 1.0, Tolerance::default()).unwrap();
            let bound = occupation_inverse_distance_bound(1.0, d).unwrap();
            assert!(q.value <= bound, "d={d}: {} > {bound}", q.value);
        }
    }

    #[test]
    fn bound_constant_matches_three_dimensional_form() {
        let c0 = (3.0 / (2.0 * PI)).powf(1.5) * (-1.5f64).exp();
        assert!((peak_constant(3) - c0).abs() < 1e-16);
        // brute-force sup over a grid
        let sup = (1..200_000)
            .map(|i| {
                let u = i as f64 * 1e-4;
                (u / (2.0 * PI)).powf(1.5) * (-u / 2.0).exp()
            })
            .fold(0.0, f64::max);
        assert!((sup - c0).abs() < 1e-10);
        for alpha in [0.5, 1.0, 2.0] {
            let c = singular_bound_constant(alpha, 3).unwrap();
            assert!((c - 2f64.powf(alpha) * (1.0 + 4.0 * PI * c0 / (3.0 - alpha))).abs() < 1e-14);
        }
    }

    #[test]
    fn log_ratio_examples() {
        let v = SpatialPoint::new(&[0.0, 1.0, 0.0]).unwrap();
        let zero = SpatialPoint::origin(3).unwrap();
        let (l, r) = log_ratio_sides(&zero, &v).unwrap();
        assert_eq!((l, r), (0.0, 0.0));
        assert!(log_ratio_inequality_holds(&zero, &v).unwrap());
        let (l, r) = log_ratio_sides(&v, &v).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert!((r - (1.0 + 0.5f64.sqrt())).abs() < 1e-15);
        assert!(log_ratio_inequality_holds(&zero, &zero).is_err());
        assert!(log_ratio_inequality_holds(&v.scale(-1.0), &v).is_err());
    }

    #[test]
    fn spatial_point_validation_and_serde() {
        assert!(SpatialPoint::new(&[1.0]).is_err());
        assert!(SpatialPoint::new(&[1.0, f64::NAN]).is_err());
        let p = SpatialPoint::new(&[1.0, 2.0]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "[1.0,2.0]");
        let back: SpatialPoint = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<SpatialPoint>("[1.0]").is_err());
    }
}
