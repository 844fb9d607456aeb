//! Reductions over replica ensembles.
//!
//! Every reduction sorts or otherwise canonicalises its input first, so the
//! result does not depend on sample order down to the last bit.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Two-sided 99% standard normal quantile.
pub fn z99() -> f64 {
    Normal::standard().inverse_cdf(0.995)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance (`NaN` when `n = 1`).
    pub variance: f64,
    pub std_error: f64,
    pub min: f64,
    pub max: f64,
}

impl EnsembleSummary {
    /// True when `target` lies within `k` standard errors of the mean.
    pub fn mean_within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }

    /// Mean of the squared samples.
    pub fn second_moment(&self) -> f64 {
        let n = self.n as f64;
        self.variance * (n - 1.0) / n + self.mean * self.mean
    }
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn summarize(samples: &[f64]) -> Result<EnsembleSummary> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("cannot summarize an empty sample".into()));
    }
    if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite sample {bad}")));
    }
    let v = sorted(samples);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let variance = if v.len() > 1 {
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        f64::NAN
    };
    Ok(EnsembleSummary {
        n: v.len(),
        mean,
        variance,
        std_error: (variance / n).sqrt(),
        min: v[0],
        max: v[v.len() - 1],
    })
}

/// Standard error of the sample variance, from the fourth central moment.
pub fn variance_std_error(samples: &[f64]) -> Result<f64> {
    let s = summarize(samples)?;
    if s.n < 4 {
        return Err(Error::InsufficientData("need at least four samples".into()));
    }
    let v = sorted(samples);
    let n = s.n as f64;
    let m4 = v.iter().map(|x| (x - s.mean).powi(4)).sum::<f64>() / n;
    let m2 = s.variance * (n - 1.0) / n;
    Ok(((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub ks_distance: f64,
    pub n: usize,
    pub reference_mean: f64,
    pub reference_variance: f64,
    /// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
    pub p_value: f64,
}

pub const MIN_KS_SAMPLES: usize = 50;

/// Exact one-sample Kolmogorov–Smirnov distance against `N(mean, var)`.
pub fn ks_against_normal(samples: &[f64], mean: f64, var: f64) -> Result<NormalityReport> {
    if samples.len() < MIN_KS_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "KS test needs at least {MIN_KS_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if !(var > 0.0 && var.is_finite()) || !mean.is_finite() {
        return Err(Error::Domain(format!("degenerate reference N({mean}, {var})")));
    }
    let reference = Normal::new(mean, var.sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
    let v = sorted(samples);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = reference.cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(NormalityReport {
        ks_distance: d.clamp(0.0, 1.0),
        n: v.len(),
        reference_mean: mean,
        reference_variance: var,
        p_value: kolmogorov_survival((n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d),
    })
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub n: usize,
    pub correlation: f64,
    /// Fisher-z 99% interval.
    pub ci_low: f64,
    pub ci_high: f64,
}

impl CorrelationEstimate {
    pub fn ci_contains(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// Outcome of the correlation test for one companion functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ProbeOutcome {
    Estimated(CorrelationEstimate),
    /// The functional did not vary across replicas.
    ZeroVariance,
}

pub const MIN_PROBE_SAMPLES: usize = 100;

/// Pearson correlation with a Fisher-z 99% interval.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<Option<CorrelationEstimate>> {
    if a.len() != b.len() {
        return Err(Error::Domain("paired samples differ in length".into()));
    }
    if a.len() < 4 {
        return Err(Error::InsufficientData("need at least four pairs".into()));
    }
    // Canonical order: sort pairs lexicographically.
    let mut pairs: Vec<(f64, f64)> = a.iter().copied().zip(b.iter().copied()).collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    let n = pairs.len() as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(None);
    }
    let r = (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0);
    let z = r.clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh();
    let half = z99() / (n - 3.0).sqrt();
    Ok(Some(CorrelationEstimate {
        n: pairs.len(),
        correlation: r,
        ci_low: (z - half).tanh(),
        ci_high: (z + half).tanh(),
    }))
}

/// Correlation of `z` with each companion functional (`functionals[i][k]` is
/// functional `i` on replica `k`).
pub fn independence_probe(z: &[f64], functionals: &[Vec<f64>]) -> Result<Vec<ProbeOutcome>> {
    if z.len() < MIN_PROBE_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "independence probe needs at least {MIN_PROBE_SAMPLES} pairs, got {}",
            z.len()
        )));
    }
    functionals
        .iter()
        .map(|f| {
            Ok(match correlation(z, f)? {
                Some(c) => ProbeOutcome::Estimated(c),
                None => ProbeOutcome::ZeroVariance,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundednessRow {
    pub radius: f64,
    pub mean_abs: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundednessReport {
    pub rows: Vec<BoundednessRow>,
    pub factor: f64,
    /// `max(mean − 3SE) / min(mean + 3SE)` over the grid.
    pub widened_ratio: f64,
    pub bounded: bool,
}

pub const DEFAULT_BOUNDEDNESS_FACTOR: f64 = 3.0;

/// Checks that `E|Vᵣ|` stays within `factor` across a shrinking radius grid.
///
/// Each grid entry is `(radius, samples)`; radii must be strictly decreasing.
/// The grid is flagged bounded when the largest mean (less three standard
/// errors) is at most `factor` times the smallest mean (plus three standard
/// errors).
pub fn l1_boundedness_report(grid: &[(f64, Vec<f64>)], factor: f64) -> Result<BoundednessReport> {
    if grid.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "boundedness report needs at least 3 radii, got {}",
            grid.len()
        )));
    }
    if grid.windows(2).any(|w| !(w[1].0 < w[0].0)) || grid.iter().any(|g| !(g.0 > 0.0)) {
        return Err(Error::Domain("radii must be positive and strictly decreasing".into()));
    }
    if !(factor >= 1.0) {
        return Err(Error::Domain(format!("factor must be at least 1, got {factor}")));
    }
    let rows = grid
        .iter()
        .map(|(r, s)| {
            let abs: Vec<f64> = s.iter().map(|v| v.abs()).collect();
            let sum = summarize(&abs)?;
            if sum.n < 2 {
                return Err(Error::InsufficientData(format!("radius {r} has fewer than 2 samples")));
            }
            Ok(BoundednessRow {
                radius: *r,
                mean_abs: sum.mean,
                std_error: sum.std_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let hi = rows.iter().map(|r| r.mean_abs - 3.0 * r.std_error).fold(f64::NEG_INFINITY, f64::max);
    let lo = rows.iter().map(|r| r.mean_abs + 3.0 * r.std_error).fold(f64::INFINITY, f64::min);
    let bounded = hi <= factor * lo;
    Ok(BoundednessReport {
        rows,
        factor,
        widened_ratio: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        bounded,
    })
}

/// Correlation between statistics computed at two anchors on the same
/// trajectories. Values near 1 would indicate convergence in probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecorrelationReport {
    pub radius_a: f64,
    pub radius_b: f64,
    pub estimate: Option<CorrelationEstimate>,
}

pub fn decorrelation_report(radius_a: f64, a: &[f64], radius_b: f64, b: &[f64]) -> Result<DecorrelationReport> {
    Ok(DecorrelationReport {
        radius_a,
        radius_b,
        estimate: correlation(a, b)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal as NormalDist};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn normals(seed: u64, n: usize, mean: f64, sd: f64) -> Vec<f64> {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let d = NormalDist::new(mean, sd).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn summary_examples() {
        let s = summarize(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((s.mean, s.variance), (1.0, 0.0));
        let s = summarize(&[0.0, 2.0]).unwrap();
        assert_eq!((s.mean, s.variance), (1.0, 2.0));
        assert!((s.std_error - 1.0).abs() < 1e-15);
        assert!(summarize(&[]).is_err());
        assert!(summarize(&[3.0]).unwrap().variance.is_nan());
        let s = summarize(&normals(1, 10_000, 0.0, 2.0)).unwrap();
        assert!(s.mean.abs() <= 3.0 * 2.0 / 100.0);
        assert!((s.second_moment() - s.variance * 9999.0 / 10_000.0 - s.mean * s.mean).abs() < 1e-12);
    }

    #[test]
    fn variance_error_for_normals() {
        // For normal data SE(s²) ≈ σ²·sqrt(2/n).
        let x = normals(2, 20_000, 0.0, 1.0);
        let se = variance_std_error(&x).unwrap();
        assert!((se / (2.0f64 / 20_000.0).sqrt() - 1.0).abs() < 0.1);
    }

    #[test]
    fn ks_examples() {
        let x = normals(3, 1000, 0.0, 1.0);
        assert!(ks_against_normal(&x, 0.0, 1.0).unwrap().ks_distance <= 0.0608);
        assert!(ks_against_normal(&[1.0; 100], 1.0, 1.0).unwrap().ks_distance >= 0.5);
        let shifted: Vec<f64> = x.iter().map(|v| v + 5.0).collect();
        assert!(ks_against_normal(&shifted, 0.0, 1.0).unwrap().ks_distance > 0.95);
        assert!(matches!(ks_against_normal(&x, 0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(ks_against_normal(&x[..49], 0.0, 1.0), Err(Error::InsufficientData(_))));
    }

    // Brute-force KS distance on a fine grid between sample points.
    #[test]
    fn ks_matches_brute_force() {
        let x = normals(4, 200, 0.3, 1.2);
        let reference = Normal::new(0.0, 1.0).unwrap();
        let mut v = x.clone();
        v.sort_by(f64::total_cmp);
        let mut d: f64 = 0.0;
        for (i, &xi) in v.iter().enumerate() {
            let below = i as f64 / 200.0;
            let at = (i + 1) as f64 / 200.0;
            let f = reference.cdf(xi);
            d = d.max((f - below).abs()).max((f - at).abs());
        }
        let got = ks_against_normal(&x, 0.0, 1.0).unwrap().ks_distance;
        assert!((got - d).abs() < 1e-15);
    }

    #[test]
    fn ks_p_value_is_roughly_uniform_under_null() {
        let rejections = (0..200)
            .filter(|&s| {
                let x = normals(100 + s, 300, 0.0, 1.0);
                ks_against_normal(&x, 0.0, 1.0).unwrap().p_value < 0.05
            })
            .count();
        assert!(rejections <= 22, "{rejections}");
    }

    #[test]
    fn correlation_examples() {
        let z = normals(5, 1000, 0.0, 1.0);
        let r = correlation(&z, &z).unwrap().unwrap();
        assert!((r.correlation - 1.0).abs() < 1e-12);
        let w = normals(6, 1000, 0.0, 1.0);
        let out = independence_probe(&z, &[w, vec![2.0; 1000]]).unwrap();
        match out[0] {
            ProbeOutcome::Estimated(c) => {
                assert!(c.correlation.abs() <= 0.082);
                assert!(c.ci_contains(0.0));
            }
            _ => panic!("expected an estimate"),
        }
        assert_eq!(out[1], ProbeOutcome::ZeroVariance);
        assert!(independence_probe(&z[..99], &[]).is_err());
    }

    #[test]
    fn boundedness_examples() {
        let grid: Vec<(f64, Vec<f64>)> = [0.3, 0.2, 0.1, 0.05].iter().map(|&r| (r, vec![1.0, 1.2, 0.8, 1.0])).collect();
        assert!(l1_boundedness_report(&grid, DEFAULT_BOUNDEDNESS_FACTOR).unwrap().bounded);
        // Samples growing like log(1/r) over several decades.
        let grid: Vec<(f64, Vec<f64>)> = [0.5, 0.1, 1e-2, 1e-3]
            .iter()
            .map(|&r: &f64| {
                let m = (1.0 / r).ln();
                (r, vec![0.99 * m, m, 1.01 * m])
            })
            .collect();
        let rep = l1_boundedness_report(&grid, DEFAULT_BOUNDEDNESS_FACTOR).unwrap();
        assert!(!rep.bounded, "{rep:?}");
        assert!(l1_boundedness_report(&grid[..2], 3.0).is_err());
        let mut unsorted = grid.clone();
        unsorted.swap(0, 1);
        assert!(l1_boundedness_report(&unsorted, 3.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reductions_are_permutation_invariant(
            data in prop::collection::vec(-1e3f64..1e3, 100..200),
            seed in any::<u64>(),
        ) {
            let mut shuffled = data.clone();
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            rand::seq::SliceRandom::shuffle(&mut shuffled[..], &mut rng);
            prop_assert_eq!(summarize(&data).unwrap(), summarize(&shuffled).unwrap());
            prop_assert_eq!(
                ks_against_normal(&data, 1.0, 4e4).unwrap(),
                ks_against_normal(&shuffled, 1.0, 4e4).unwrap()
            );
            let other: Vec<f64> = data.iter().map(|v| v.sin()).collect();
            let mut pairs: Vec<(f64, f64)> = data.iter().copied().zip(other.iter().copied()).collect();
            rand::seq::SliceRandom::shuffle(&mut pairs[..], &mut rng);
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert_eq!(correlation(&data, &other).unwrap(), correlation(&a, &b).unwrap());
        }

        #[test]
        fn ks_distance_is_a_probability(data in prop::collection::vec(-10f64..10.0, 50..120), m in -5f64..5.0, v in 0.01f64..10.0) {
            let d = ks_against_normal(&data, m, v).unwrap().ks_distance;
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn own_moments_fit_better_than_mismatched(
            seed in any::<u64>(),
            shift in 0.5f64..3.0,
            stretch in prop::sample::select(vec![0.25f64, 0.4, 2.5, 4.0]),
        ) {
            let x = normals(seed, 500, 1.0, 2.0);
            let s = summarize(&x).unwrap();
            let own = ks_against_normal(&x, s.mean, s.variance).unwrap().ks_distance;
            let moved = ks_against_normal(&x, s.mean + shift * s.variance.sqrt(), s.variance).unwrap().ks_distance;
            let scaled = ks_against_normal(&x, s.mean, s.variance * stretch).unwrap().ks_distance;
            prop_assert!(own <= moved);
            prop_assert!(own <= scaled);
        }
    }
}
