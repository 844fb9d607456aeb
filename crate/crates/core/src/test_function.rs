//! Integrands paired with the measure `X_t`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel_math::{heat_kernel_radial, SpatialPoint, C3};

/// Floor applied to `|y - x|` when a singular integrand is evaluated at (or
/// numerically on top of) its anchor.
pub const SINGULARITY_FLOOR: f64 = 1e-12;

/// A test function `φ` for `X_t(φ) = ∫ φ(y) X_t(dy)`.
///
/// All kinds except `Constant` are radial about a point (the anchor or the
/// Gaussian centre).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `φ ≡ value`.
    Constant { value: f64 },
    /// `φ(y) = exp(-|y - center|²/(2·scale²))`, peak value one.
    Gaussian { center: SpatialPoint, scale: f64 },
    /// `φ_x(y) = c₃/|y - x|`.
    InverseDistance { anchor: SpatialPoint },
    /// `g_x(y) = log|y - x|`.
    LogDistance { anchor: SpatialPoint },
    /// `p_ε^x(y) = p_ε(y - x)`.
    HeatKernelProbe { anchor: SpatialPoint, epsilon: f64 },
    /// `|y - x|^{-2}`.
    InverseSquare { anchor: SpatialPoint },
}

impl TestFunction {
    pub fn constant(value: f64) -> Self {
        TestFunction::Constant { value }
    }

    pub fn gaussian(center: SpatialPoint, scale: f64) -> Self {
        TestFunction::Gaussian { center, scale }
    }

    pub fn inverse_distance(anchor: SpatialPoint) -> Self {
        TestFunction::InverseDistance { anchor }
    }

    pub fn log_distance(anchor: SpatialPoint) -> Self {
        TestFunction::LogDistance { anchor }
    }

    pub fn heat_kernel_probe(anchor: SpatialPoint, epsilon: f64) -> Self {
        TestFunction::HeatKernelProbe { anchor, epsilon }
    }

    pub fn inverse_square(anchor: SpatialPoint) -> Self {
        TestFunction::InverseSquare { anchor }
    }

    /// The point the function is radial about, if any.
    pub fn center(&self) -> Option<SpatialPoint> {
        match *self {
            TestFunction::Constant { .. } => None,
            TestFunction::Gaussian { center, .. } => Some(center),
            TestFunction::InverseDistance { anchor }
            | TestFunction::LogDistance { anchor }
            | TestFunction::HeatKernelProbe { anchor, .. }
            | TestFunction::InverseSquare { anchor } => Some(anchor),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        self.center().map(|c| c.dim())
    }

    /// True for kinds that blow up at their anchor.
    pub fn is_singular(&self) -> bool {
        matches!(
            self,
            TestFunction::InverseDistance { .. } | TestFunction::LogDistance { .. } | TestFunction::InverseSquare { .. }
        )
    }

    pub fn is_nonnegative(&self) -> bool {
        match *self {
            TestFunction::Constant { value } => value >= 0.0,
            TestFunction::LogDistance { .. } => false,
            _ => true,
        }
    }

    /// Order `α` of the `ρ^{-α}` blow-up at the anchor (`0` for bounded kinds,
    /// and for the logarithm, which is integrable to every power).
    pub fn singularity_order(&self) -> f64 {
        match self {
            TestFunction::InverseDistance { .. } => 1.0,
            TestFunction::InverseSquare { .. } => 2.0,
            _ => 0.0,
        }
    }

    /// Checks parameters and, when `dim` is given, dimensional consistency.
    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        if let (Some(d), Some(own)) = (dim, self.dim()) {
            if d != own {
                return Err(Error::Config(format!("{self} lives in d={own}, expected d={d}")));
            }
        }
        match *self {
            TestFunction::Constant { value } if !value.is_finite() => {
                Err(Error::Config("constant test function must be finite".into()))
            }
            TestFunction::Gaussian { scale, .. } if !(scale > 0.0 && scale.is_finite()) => {
                Err(Error::Config(format!("Gaussian scale must be positive, got {scale}")))
            }
            TestFunction::HeatKernelProbe { epsilon, .. } if !(epsilon > 0.0 && epsilon.is_finite()) => {
                Err(Error::Config(format!("mollifier width must be positive, got {epsilon}")))
            }
            TestFunction::InverseDistance { anchor }
            | TestFunction::LogDistance { anchor }
            | TestFunction::InverseSquare { anchor }
                if anchor.is_origin() =>
            {
                Err(Error::Config(format!(
                    "{self}: singular test functions need a nonzero anchor"
                )))
            }
            _ => Ok(()),
        }
    }

    /// The function as a profile of the distance `ρ` to its centre.
    /// Singular kinds return non-finite values at `ρ = 0`.
    pub fn radial_profile(&self, rho: f64) -> f64 {
        match *self {
            TestFunction::Constant { value } => value,
            TestFunction::Gaussian { scale, .. } => (-rho * rho / (2.0 * scale * scale)).exp(),
            TestFunction::InverseDistance { .. } => C3 / rho,
            TestFunction::LogDistance { .. } => rho.ln(),
            TestFunction::HeatKernelProbe { anchor, epsilon } => heat_kernel_radial(epsilon, rho * rho, anchor.dim()),
            TestFunction::InverseSquare { .. } => 1.0 / (rho * rho),
        }
    }

    fn distance_to_center(&self, y: &[f64]) -> f64 {
        match self.center() {
            None => 0.0,
            Some(c) => c
                .coords()
                .iter()
                .zip(y)
                .map(|(ci, yi)| (yi - ci) * (yi - ci))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// `φ(y)`. Singular kinds evaluated exactly at the anchor are an error.
    pub fn eval(&self, y: &[f64]) -> Result<f64> {
        if let Some(d) = self.dim() {
            if y.len() != d {
                return Err(Error::Domain(format!("point has dimension {}, expected {d}", y.len())));
            }
        }
        let rho = self.distance_to_center(y);
        if self.is_singular() && rho == 0.0 {
            return Err(Error::Singular(format!("{self} evaluated at its anchor")));
        }
        Ok(self.radial_profile(rho))
    }

    /// `φ(y)` with `|y - x|` floored at [`SINGULARITY_FLOOR`]; `clamps` is
    /// incremented whenever the floor is applied.
    pub fn eval_clamped(&self, y: &[f64], clamps: &mut u64) -> f64 {
        let mut rho = self.distance_to_center(y);
        if self.is_singular() && rho < SINGULARITY_FLOOR {
            rho = SINGULARITY_FLOOR;
            *clamps += 1;
        }
        self.radial_profile(rho)
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = |p: &SpatialPoint| {
            p.coords().iter().map(|c| format!("{c}")).collect::<Vec<_>>().join(",")
        };
        match self {
            TestFunction::Constant { value } => write!(f, "constant({value})"),
            TestFunction::Gaussian { center, scale } => write!(f, "gaussian([{}],{scale})", p(center)),
            TestFunction::InverseDistance { anchor } => write!(f, "inverse_distance([{}])", p(anchor)),
            TestFunction::LogDistance { anchor } => write!(f, "log_distance([{}])", p(anchor)),
            TestFunction::HeatKernelProbe { anchor, epsilon } => {
                write!(f, "heat_kernel_probe([{}],{epsilon})", p(anchor))
            }
            TestFunction::InverseSquare { anchor } => write!(f, "inverse_square([{}])", p(anchor)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x3() -> SpatialPoint {
        SpatialPoint::new(&[0.3, 0.0, 0.4]).unwrap()
    }

    #[test]
    fn evaluates_each_kind() {
        let y = [0.0, 0.0, 0.0];
        assert_eq!(TestFunction::constant(2.5).eval(&y).unwrap(), 2.5);
        assert!((TestFunction::inverse_distance(x3()).eval(&y).unwrap() - C3 / 0.5).abs() < 1e-15);
        assert!((TestFunction::log_distance(x3()).eval(&y).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert!((TestFunction::inverse_square(x3()).eval(&y).unwrap() - 4.0).abs() < 1e-14);
        let g = TestFunction::gaussian(SpatialPoint::origin(3).unwrap(), 2.0);
        assert!((g.eval(&[2.0, 0.0, 0.0]).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        let h = TestFunction::heat_kernel_probe(x3(), 0.1);
        let want = (0.2 * std::f64::consts::PI).powf(-1.5) * (-0.25f64 / 0.2).exp();
        assert!((h.eval(&y).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn singular_point_is_signalled() {
        let f = TestFunction::inverse_square(x3());
        assert!(matches!(f.eval(&[0.3, 0.0, 0.4]), Err(Error::Singular(_))));
        let mut clamps = 0;
        let v = f.eval_clamped(&[0.3, 0.0, 0.4], &mut clamps);
        assert_eq!(clamps, 1);
        assert!((v / 1e24 - 1.0).abs() < 1e-12);
        let v = TestFunction::log_distance(x3()).eval_clamped(&[0.3, 0.0, 0.4], &mut clamps);
        assert_eq!(clamps, 2);
        assert!(v.is_finite());
        // Bounded kinds never clamp.
        TestFunction::heat_kernel_probe(x3(), 0.1).eval_clamped(&[0.3, 0.0, 0.4], &mut clamps);
        assert_eq!(clamps, 2);
    }

    #[test]
    fn validation() {
        let o = SpatialPoint::origin(3).unwrap();
        assert!(TestFunction::inverse_distance(o).validate(Some(3)).is_err());
        assert!(TestFunction::heat_kernel_probe(o, 0.1).validate(Some(3)).is_ok());
        assert!(TestFunction::heat_kernel_probe(o, 0.0).validate(Some(3)).is_err());
        assert!(TestFunction::gaussian(o, -1.0).validate(None).is_err());
        assert!(TestFunction::log_distance(x3()).validate(Some(2)).is_err());
        assert!(TestFunction::constant(1.0).validate(Some(2)).is_ok());
    }

    #[test]
    fn serde_shape() {
        let f = TestFunction::heat_kernel_probe(SpatialPoint::on_axis(2, 0.2).unwrap(), 0.0025);
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, r#"{"kind":"heat_kernel_probe","anchor":[0.2,0.0],"epsilon":0.0025}"#);
        let back: TestFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
    }
}
