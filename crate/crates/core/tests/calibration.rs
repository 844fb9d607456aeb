// Moderate-size ensemble checked against the exact moment formulas.

use sbm_core::kernel_math::{mollified_local_time_mean, SpatialPoint};
use sbm_core::moment_oracle::{first_moment, variance};
use sbm_core::particle_sim::{simulate_ensemble, Observable, SimConfig};
use sbm_core::stats::{summarize, variance_std_error};
use sbm_core::{TestFunction, Tolerance};

const REPLICAS: usize = 4000;

fn threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[test]
fn particle_moments_match_exact_values() {
    let tol = Tolerance::default();
    let origin = SpatialPoint::origin(3).unwrap();
    let x = SpatialPoint::on_axis(3, 0.3).unwrap();
    let eps = 0.3f64.powi(2) / 16.0;
    let fs = [TestFunction::constant(1.0), TestFunction::gaussian(origin, 1.0)];
    let probe = TestFunction::heat_kernel_probe(x, eps);
    let config = SimConfig::new(3, 200, 1.0, 11)
        .with_observable(Observable::point(fs[0]))
        .with_observable(Observable::point(fs[1]))
        .with_observable(Observable::occupation(probe));
    let trajs = simulate_ensemble(&config, REPLICAS, threads()).unwrap();

    for (k, f) in fs.iter().enumerate() {
        let samples: Vec<f64> = trajs.iter().map(|t| t.terminal[k]).collect();
        let s = summarize(&samples).unwrap();
        let mean = first_moment(f, 1.0, tol).unwrap().value;
        let var = variance(f, 1.0, tol).unwrap();
        assert!(s.mean_within(mean, 3.0), "{f}: mean {} vs {mean} (se {})", s.mean, s.std_error);
        let se = variance_std_error(&samples).unwrap();
        assert!(
            (s.variance - var).abs() < (0.1 * var).max(3.0 * se),
            "{f}: variance {} vs {var}",
            s.variance
        );
    }

    let occ: Vec<f64> = trajs.iter().map(|t| t.occupation[2].unwrap()).collect();
    let s = summarize(&occ).unwrap();
    let want = mollified_local_time_mean(1.0, 0.3, eps, 3, tol).unwrap().value;
    assert!(s.mean_within(want, 3.0), "local time mean {} vs {want} (se {})", s.mean, s.std_error);
}
