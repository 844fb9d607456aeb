// Reference values below were computed independently with scipy (adaptive
// `quad` over the radial heat-kernel density, erf/E1 from scipy.special) and
// are hard-coded here. They do not share code with the Rust quadrature.

use sbm_core::kernel_math::{mollified_local_time_mean, SpatialPoint};
use sbm_core::moment_oracle::{
    local_time_probe_covariance, local_time_variance, qv_expectation, tanaka_residual_variance, variance,
};
use sbm_core::{TestFunction, Tolerance};

fn tol() -> Tolerance {
    Tolerance::new(1e-11, 1e-9)
}

fn close(got: f64, want: f64, rel: f64, what: &str) {
    assert!(
        ((got - want) / want).abs() < rel,
        "{what}: got {got}, reference {want}"
    );
}

struct Ref {
    dim: usize,
    a: f64,
    qv: f64,
    var_local_time: f64,
    var_residual: f64,
}

const REFS: [Ref; 4] = [
    Ref { dim: 3, a: 0.2, qv: 0.100353394, var_local_time: 0.0440307893, var_residual: 0.0884369894 },
    Ref { dim: 3, a: 0.1, qv: 0.135216599, var_local_time: 0.0736399816, var_residual: 0.122093465 },
    Ref { dim: 2, a: 0.2, qv: 0.718742229, var_local_time: 0.0538248812, var_residual: 0.694974458 },
    Ref { dim: 2, a: 0.05, qv: 0.836563707, var_local_time: 0.0677586169, var_residual: 0.832436103 },
];

fn qv_function(dim: usize, x: SpatialPoint) -> TestFunction {
    if dim == 3 {
        TestFunction::inverse_distance(x)
    } else {
        TestFunction::log_distance(x)
    }
}

#[test]
fn local_time_second_order_quantities_match_reference() {
    for r in &REFS {
        let x = SpatialPoint::on_axis(r.dim, r.a).unwrap();
        let eps = (r.a / 4.0).powi(2);
        let label = format!("d={} a={}", r.dim, r.a);
        let qv = qv_expectation(&qv_function(r.dim, x), 1.0, tol()).unwrap().value;
        close(qv, r.qv, 1e-6, &format!("{label} qv"));
        let vl = local_time_variance(1.0, &x, eps, tol()).unwrap().value;
        close(vl, r.var_local_time, 1e-6, &format!("{label} Var L"));
        let vr = tanaka_residual_variance(1.0, &x, eps, tol()).unwrap().value;
        close(vr, r.var_residual, 1e-6, &format!("{label} Var residual"));
    }
}

#[test]
fn mollified_local_time_mean_matches_reference() {
    let cases = [
        (3, 0.3, 0.40572),
        (3, 0.2, 0.66973),
        (3, 0.1, 1.46471),
        (3, 0.05, 3.05597),
        (2, 0.3, 0.40962),
        (2, 0.2, 0.53430),
        (2, 0.1, 0.75227),
        (2, 0.05, 0.97224),
    ];
    for (d, a, want) in cases {
        let eps = (a / 4.0f64).powi(2);
        let got = mollified_local_time_mean(1.0, a, eps, d, tol()).unwrap().value;
        assert!((got - want).abs() < 1e-5, "d={d} a={a}: {got} vs {want}");
    }
}

#[test]
fn local_time_probe_correlation_matches_reference() {
    let cases = [(3, 0.3, 0.648), (3, 0.1, 0.555), (2, 0.2, 0.776), (2, 0.05, 0.765)];
    for (d, a, want) in cases {
        let x = SpatialPoint::on_axis(d, a).unwrap();
        let eps = (a / 4.0f64).powi(2);
        let probe = TestFunction::gaussian(SpatialPoint::origin(d).unwrap(), 1.0);
        let cov = local_time_probe_covariance(1.0, &x, eps, &probe, 0.5, tol()).unwrap().value;
        let vl = local_time_variance(1.0, &x, eps, tol()).unwrap().value;
        let vp = variance(&probe, 0.5, tol()).unwrap();
        let rho = cov / (vl * vp).sqrt();
        assert!((rho - want).abs() < 1e-3, "d={d} a={a}: {rho} vs {want}");
    }
}
