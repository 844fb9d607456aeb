//! Globally adaptive Gauss–Kronrod (10/21) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value of an integral together with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

impl QuadratureResult {
    pub fn exact(value: f64) -> Self {
        QuadratureResult {
            value,
            abs_error_estimate: 0.0,
            evaluations: 0,
        }
    }

    /// Relative error estimate, `abs_error_estimate / |value|`.
    pub fn relative_error(&self) -> f64 {
        if self.value == 0.0 {
            self.abs_error_estimate
        } else {
            self.abs_error_estimate / self.value.abs()
        }
    }

    pub(crate) fn scaled(self, factor: f64) -> Self {
        QuadratureResult {
            value: self.value * factor,
            abs_error_estimate: self.abs_error_estimate * factor.abs(),
            evaluations: self.evaluations,
        }
    }
}

/// Stopping tolerance: the estimate must satisfy
/// `err <= max(abs, rel * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-8,
            rel: 1e-6,
        }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel }
    }

    /// Tolerance for an integral nested inside another one.
    pub fn inner(self) -> Self {
        Tolerance {
            abs: self.abs * 1e-2,
            rel: self.rel * 1e-2,
        }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

const MAX_SUBDIVISIONS: usize = 4000;

// Kronrod abscissae on [-1, 1] (positive half, descending) and weights.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_208_814_839,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];

// Gauss weights for the abscissae XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<Panel> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    if !value.is_finite() {
        return Err(Error::Quadrature(format!(
            "non-finite integrand on [{a}, {b}]"
        )));
    }
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok(Panel { a, b, value, error: err })
}

/// Integrate `f` over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<QuadratureResult> {
    integrate_with_breaks(f, &[a, b], tol)
}

/// Integrate `f` over `[points[0], points[last]]`, using the interior
/// points as initial panel boundaries. Points must be nondecreasing;
/// repeated points are ignored.
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    tol: Tolerance,
) -> Result<QuadratureResult> {
    if points.len() < 2 {
        return Err(Error::Domain("need at least two integration limits".into()));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::Domain("integration limits must be finite".into()));
    }
    if points.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("break points must be sorted".into()));
    }
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0usize;
    let mut value = 0.0;
    let mut error = 0.0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            let p = kronrod21(&mut f, w[0], w[1])?;
            evaluations += 21;
            value += p.value;
            error += p.error;
            heap.push(p);
        }
    }
    let mut retired_value = 0.0;
    let mut retired_error = 0.0;
    let mut subdivisions = heap.len();
    while error > tol.target(value) && subdivisions < MAX_SUBDIVISIONS {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        // Panels that can no longer be split in floating point are retired.
        if mid <= worst.a || mid >= worst.b || (worst.b - worst.a) < 1e-14 * mid.abs().max(1e-300) {
            retired_value += worst.value;
            retired_error += worst.error;
            if heap.is_empty() {
                break;
            }
            continue;
        }
        let left = kronrod21(&mut f, worst.a, mid)?;
        let right = kronrod21(&mut f, mid, worst.b)?;
        evaluations += 42;
        subdivisions += 1;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to avoid drift from the running updates.
    let mut total = retired_value;
    let mut total_err = retired_error;
    for p in heap.iter() {
        total += p.value;
        total_err += p.error;
    }
    Ok(QuadratureResult {
        value: total,
        abs_error_estimate: total_err,
        evaluations,
    })
}

/// Integrate `f` over `[a, ∞)` through the substitution `x = a + (1-u)/u`.
pub fn integrate_semi_infinite<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    tol: Tolerance,
) -> Result<QuadratureResult> {
    integrate(
        |u: f64| {
            let x = a + (1.0 - u) / u;
            let v = f(x);
            if v == 0.0 {
                0.0
            } else {
                v / (u * u)
            }
        },
        0.0,
        1.0,
        tol,
    )
}
