//! Test functions compiled for the inner simulation loop.

use std::f64::consts::PI;

use crate::kernel_math::C3;
use crate::test_function::{TestFunction, SINGULARITY_FLOOR};

// Beyond this value of |y-x|²/(2ε) the heat-kernel probe is below 1e-22 of
// its peak and is taken as zero.
const PROBE_CUTOFF: f64 = 50.0;

#[derive(Debug, Clone, Copy)]
enum Kind {
    Constant(f64),
    Gaussian { inv_two_var: f64 },
    InverseDistance,
    LogDistance,
    HeatProbe { peak: f64, inv_two_eps: f64 },
    InverseSquare,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Kernel {
    kind: Kind,
    center: [f64; 3],
}

impl Kernel {
    pub(crate) fn compile(f: &TestFunction) -> Self {
        let center = f.center().map(|c| c.padded()).unwrap_or([0.0; 3]);
        let kind = match *f {
            TestFunction::Constant { value } => Kind::Constant(value),
            TestFunction::Gaussian { scale, .. } => Kind::Gaussian {
                inv_two_var: 0.5 / (scale * scale),
            },
            TestFunction::InverseDistance { .. } => Kind::InverseDistance,
            TestFunction::LogDistance { .. } => Kind::LogDistance,
            TestFunction::HeatKernelProbe { anchor, epsilon } => Kind::HeatProbe {
                peak: (2.0 * PI * epsilon).powf(-0.5 * anchor.dim() as f64),
                inv_two_eps: 0.5 / epsilon,
            },
            TestFunction::InverseSquare { .. } => Kind::InverseSquare,
        };
        Kernel { kind, center }
    }

    #[inline(always)]
    pub(crate) fn eval<const D: usize>(&self, y: &[f64; D], clamps: &mut u64) -> f64 {
        let mut r2 = 0.0;
        for k in 0..D {
            let g = y[k] - self.center[k];
            r2 += g * g;
        }
        let floor2 = SINGULARITY_FLOOR * SINGULARITY_FLOOR;
        match self.kind {
            Kind::Constant(c) => c,
            Kind::Gaussian { inv_two_var } => (-r2 * inv_two_var).exp(),
            Kind::HeatProbe { peak, inv_two_eps } => {
                let e = r2 * inv_two_eps;
                if e > PROBE_CUTOFF {
                    0.0
                } else {
                    peak * (-e).exp()
                }
            }
            Kind::InverseDistance => C3 / clamp(r2, floor2, clamps).sqrt(),
            Kind::LogDistance => 0.5 * clamp(r2, floor2, clamps).ln(),
            Kind::InverseSquare => 1.0 / clamp(r2, floor2, clamps),
        }
    }
}

#[inline(always)]
fn clamp(r2: f64, floor2: f64, clamps: &mut u64) -> f64 {
    if r2 < floor2 {
        *clamps += 1;
        floor2
    } else {
        r2
    }
}
