use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use proptest::prelude::*;
use sbm_core::estimator::{log_identity_check_3d, register, tanaka_observables};
use sbm_core::kernel_math::{
    log_ratio_sides, occupation_inverse_distance_bound, occupation_singular_integral, singular_kernel_bound,
    singular_kernel_moment, SpatialPoint,
};
use sbm_core::moment_oracle::{first_moment, variance};
use sbm_core::particle_sim::{simulate_replica, SimConfig};
use sbm_core::{TestFunction, Tolerance};

fn tol() -> Tolerance {
    Tolerance::new(1e-10, 1e-8)
}

fn point(dim: usize, r: f64, theta: f64, phi: f64) -> SpatialPoint {
    if dim == 2 {
        SpatialPoint::new(&[r * theta.cos(), r * theta.sin()]).unwrap()
    } else {
        SpatialPoint::new(&[r * phi.sin() * theta.cos(), r * phi.sin() * theta.sin(), r * phi.cos()]).unwrap()
    }
}

fn rotate(p: &SpatialPoint, a: f64, b: f64) -> SpatialPoint {
    let c = p.coords();
    let (x, y) = (a.cos() * c[0] - a.sin() * c[1], a.sin() * c[0] + a.cos() * c[1]);
    if c.len() == 2 {
        return SpatialPoint::new(&[x, y]).unwrap();
    }
    let (y2, z) = (b.cos() * y - b.sin() * c[2], b.sin() * y + b.cos() * c[2]);
    SpatialPoint::new(&[x, y2, z]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn singular_kernel_bound_holds(
        dim in 2usize..=3,
        t in 0.01f64..5.0,
        r in 0.05f64..3.0,
        theta in 0.0f64..TAU,
        phi in 0.0f64..PI,
        frac in 0.05f64..0.95,
    ) {
        let x = point(dim, r, theta, phi);
        let alpha = frac * dim as f64;
        let lhs = singular_kernel_moment(t, &x, alpha, tol()).unwrap().value;
        let rhs = singular_kernel_bound(&x, alpha).unwrap();
        prop_assert!(lhs < rhs, "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn occupation_bound_holds(
        dim in 2usize..=3,
        t in 0.01f64..4.0,
        r in 0.0f64..3.0,
        theta in 0.0f64..TAU,
        phi in 0.0f64..PI,
    ) {
        let x = point(dim, r, theta, phi);
        let lhs = occupation_singular_integral(t, &x, 1.0, tol()).unwrap().value;
        let rhs = occupation_inverse_distance_bound(t, dim).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-6), "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn log_ratio_inequality(
        dim in 2usize..=3,
        ru in 1e-4f64..10.0,
        rv in 1e-4f64..10.0,
        a in (0.0f64..TAU, 0.0f64..PI),
        b in (0.0f64..TAU, 0.0f64..PI),
    ) {
        let u = point(dim, ru, a.0, a.1);
        let v = point(dim, rv, b.0, b.1);
        prop_assume!(u.add(&v).norm() > 1e-9);
        let (lhs, rhs) = log_ratio_sides(&u, &v).unwrap();
        prop_assert!(lhs <= rhs + 1e-12, "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn moments_are_rotation_invariant(
        dim in 2usize..=3,
        t in 0.05f64..3.0,
        r in 0.05f64..2.0,
        angles in (0.0f64..TAU, 0.0f64..PI),
        rot in (0.0f64..TAU, 0.0f64..TAU),
    ) {
        let x = point(dim, r, angles.0, angles.1);
        let y = rotate(&x, rot.0, rot.1);
        let m1 = singular_kernel_moment(t, &x, 1.0, tol()).unwrap().value;
        let m2 = singular_kernel_moment(t, &y, 1.0, tol()).unwrap().value;
        prop_assert!((m1 - m2).abs() <= 1e-8 * m1);
        let f1 = first_moment(&TestFunction::gaussian(x, 0.7), t, tol()).unwrap().value;
        let f2 = first_moment(&TestFunction::gaussian(y, 0.7), t, tol()).unwrap().value;
        prop_assert!((f1 - f2).abs() <= 1e-10 * f1.max(1e-300));
    }

    #[test]
    fn variance_is_nonnegative(
        dim in 2usize..=3,
        t in 0.05f64..3.0,
        r in 0.0f64..3.0,
        angles in (0.0f64..TAU, 0.0f64..PI),
        scale in 0.1f64..3.0,
    ) {
        let c = point(dim, r, angles.0, angles.1);
        let v = variance(&TestFunction::gaussian(c, scale), t, tol()).unwrap();
        prop_assert!(v >= 0.0, "{v}");
    }
}

fn tanaka_config(seed: u64) -> (SimConfig, SpatialPoint) {
    let x = SpatialPoint::on_axis(3, 0.2).unwrap();
    let mut config = SimConfig::new(3, 60, 0.4, seed).with_snapshots(&[0.2]);
    register(&mut config, &tanaka_observables(&x, 0.0025));
    (config, x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulation_is_deterministic_and_conserves_mass(seed in any::<u64>(), replica in 0u64..1000) {
        let (config, _) = tanaka_config(seed);
        let config = Arc::new(config);
        let a = simulate_replica(&config, replica).unwrap();
        let b = simulate_replica(&config, replica).unwrap();
        prop_assert_eq!(&a, &b);
        let n = config.n_init as f64;
        for s in &a.snapshots {
            prop_assert!((s.mass - s.count as f64 / n).abs() < 1e-12);
        }
        prop_assert!((a.terminal_mass() - a.final_count as f64 / n).abs() < 1e-12);
        if a.final_count == 0 {
            prop_assert!(a.extinct_at.is_some());
        }
    }

    #[test]
    fn log_identity_cross_relation_is_exact(seed in any::<u64>()) {
        let (config, x) = tanaka_config(seed);
        let traj = simulate_replica(&Arc::new(config), 0).unwrap();
        let check = log_identity_check_3d(&traj, &x).unwrap();
        prop_assert!(check.cross_relation_residual < 1e-10, "{}", check.cross_relation_residual);
    }
}
