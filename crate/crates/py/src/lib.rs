//! Python bindings: test functions, exact moments, the particle simulator
//! and the local-time estimators.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sbm_core::estimator;
use sbm_core::experiment::{self, BoundsGrid};
use sbm_core::kernel_math;
use sbm_core::moment_oracle;
use sbm_core::particle_sim::{self, Observable};
use sbm_core::stats;
use sbm_core::{Error, SpatialPoint, Tolerance};

fn err(e: Error) -> PyErr {
    match e {
        Error::Quadrature(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn point(coords: Vec<f64>) -> PyResult<SpatialPoint> {
    SpatialPoint::new(&coords).map_err(err)
}

fn tol() -> Tolerance {
    Tolerance::default()
}

/// A test function `φ` for `X_t(φ)`.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct TestFunction {
    inner: sbm_core::TestFunction,
}

#[pymethods]
impl TestFunction {
    #[staticmethod]
    fn constant(value: f64) -> Self {
        TestFunction {
            inner: sbm_core::TestFunction::constant(value),
        }
    }

    #[staticmethod]
    fn gaussian(center: Vec<f64>, scale: f64) -> PyResult<Self> {
        Self::checked(sbm_core::TestFunction::gaussian(point(center)?, scale))
    }

    #[staticmethod]
    fn inverse_distance(anchor: Vec<f64>) -> PyResult<Self> {
        Self::checked(sbm_core::TestFunction::inverse_distance(point(anchor)?))
    }

    #[staticmethod]
    fn log_distance(anchor: Vec<f64>) -> PyResult<Self> {
        Self::checked(sbm_core::TestFunction::log_distance(point(anchor)?))
    }

    #[staticmethod]
    fn heat_kernel_probe(anchor: Vec<f64>, epsilon: f64) -> PyResult<Self> {
        Self::checked(sbm_core::TestFunction::heat_kernel_probe(point(anchor)?, epsilon))
    }

    #[staticmethod]
    fn inverse_square(anchor: Vec<f64>) -> PyResult<Self> {
        Self::checked(sbm_core::TestFunction::inverse_square(point(anchor)?))
    }

    fn __call__(&self, y: Vec<f64>) -> PyResult<f64> {
        self.inner.eval(&y).map_err(err)
    }

    fn __repr__(&self) -> String {
        self.inner.to_string()
    }
}

impl TestFunction {
    fn checked(inner: sbm_core::TestFunction) -> PyResult<Self> {
        inner.validate(None).map_err(err)?;
        Ok(TestFunction { inner })
    }
}

/// `E X_t(φ)` from a single unit mass at the origin.
#[pyfunction]
fn first_moment(f: PyRef<'_, TestFunction>, t: f64) -> PyResult<f64> {
    Ok(moment_oracle::first_moment(&f.inner, t, tol()).map_err(err)?.value)
}

/// `E X_t(φ)²`.
#[pyfunction]
fn second_moment(f: PyRef<'_, TestFunction>, t: f64) -> PyResult<f64> {
    Ok(moment_oracle::second_moment(&f.inner, t, tol()).map_err(err)?.value)
}

/// `E ∫₀ᵗ X_s(φ²) ds`.
#[pyfunction]
fn qv_expectation(f: PyRef<'_, TestFunction>, t: f64) -> PyResult<f64> {
    Ok(moment_oracle::qv_expectation(&f.inner, t, tol()).map_err(err)?.value)
}

#[pyfunction]
fn variance(f: PyRef<'_, TestFunction>, t: f64) -> PyResult<f64> {
    moment_oracle::variance(&f.inner, t, tol()).map_err(err)
}

/// `∫₀ᵗ p_s(x) ds` for `|x| = r`.
#[pyfunction]
fn expected_local_time(t: f64, r: f64, dim: usize) -> PyResult<f64> {
    Ok(kernel_math::expected_local_time(t, r, dim, tol()).map_err(err)?.value)
}

/// `∫₀ᵗ p_{s+ε}(x) ds` for `|x| = r`.
#[pyfunction]
fn mollified_local_time_mean(t: f64, r: f64, epsilon: f64, dim: usize) -> PyResult<f64> {
    Ok(kernel_math::mollified_local_time_mean(t, r, epsilon, dim, tol()).map_err(err)?.value)
}

/// Exact variance of the mollified local time at `x`.
#[pyfunction]
fn local_time_variance(t: f64, x: Vec<f64>, epsilon: f64) -> PyResult<f64> {
    Ok(moment_oracle::local_time_variance(t, &point(x)?, epsilon, tol()).map_err(err)?.value)
}

/// `(∫ p_t(y)|y-x|^{-α} dy, C(α)/|x|^α)`.
#[pyfunction]
fn singular_kernel_check(t: f64, x: Vec<f64>, alpha: f64) -> PyResult<(f64, f64)> {
    let x = point(x)?;
    let value = kernel_math::singular_kernel_moment(t, &x, alpha, tol()).map_err(err)?.value;
    let bound = kernel_math::singular_kernel_bound(&x, alpha).map_err(err)?;
    Ok((value, bound))
}

/// Both sides of the logarithmic ratio inequality.
#[pyfunction]
fn log_ratio_sides(u: Vec<f64>, v: Vec<f64>) -> PyResult<(f64, f64)> {
    kernel_math::log_ratio_sides(&point(u)?, &point(v)?).map_err(err)
}

/// Particle-system configuration. Observables are added before simulating.
#[pyclass]
struct SimConfig {
    inner: particle_sim::SimConfig,
}

#[pymethods]
impl SimConfig {
    #[new]
    #[pyo3(signature = (dim, n_init, t_max, seed, dt=None))]
    fn new(dim: usize, n_init: usize, t_max: f64, seed: u64, dt: Option<f64>) -> PyResult<Self> {
        let mut inner = particle_sim::SimConfig::new(dim, n_init, t_max, seed);
        if let Some(dt) = dt {
            inner.dt = dt;
        }
        inner.validate().map_err(err)?;
        Ok(SimConfig { inner })
    }

    /// Tracks `X_t(φ)`; with `occupation=True` also `∫₀ᵗ X_s(φ) ds`.
    #[pyo3(signature = (f, occupation=false))]
    fn observe(&mut self, f: PyRef<'_, TestFunction>, occupation: bool) -> PyResult<usize> {
        f.inner.validate(Some(self.inner.dim)).map_err(err)?;
        let obs = if occupation {
            Observable::occupation(f.inner)
        } else {
            Observable::point(f.inner)
        };
        estimator::register(&mut self.inner, &[obs]);
        Ok(self.inner.find(&f.inner, false).expect("just registered"))
    }

    /// Registers everything the Tanaka decomposition at `x` needs.
    fn observe_tanaka(&mut self, x: Vec<f64>, epsilon: f64) -> PyResult<()> {
        let x = point(x)?;
        if x.dim() != self.inner.dim {
            return Err(PyValueError::new_err("anchor dimension differs from the config"));
        }
        estimator::register(&mut self.inner, &estimator::tanaka_observables(&x, epsilon));
        Ok(())
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    fn simulate(&self, replica: u64) -> PyResult<Trajectory> {
        let config = Arc::new(self.inner.clone());
        let inner = particle_sim::simulate_replica(&config, replica).map_err(err)?;
        Ok(Trajectory { inner })
    }

    /// Replicas `0..replicas`; results do not depend on `threads`.
    #[pyo3(signature = (replicas, threads=1))]
    fn simulate_ensemble(&self, py: Python<'_>, replicas: usize, threads: usize) -> PyResult<Vec<Trajectory>> {
        let config = self.inner.clone();
        let trajs = py
            .detach(|| particle_sim::simulate_ensemble(&config, replicas, threads))
            .map_err(err)?;
        Ok(trajs.into_iter().map(|inner| Trajectory { inner }).collect())
    }
}

#[pyclass(frozen)]
struct Trajectory {
    inner: particle_sim::Trajectory,
}

#[pymethods]
impl Trajectory {
    #[getter]
    fn replica(&self) -> u64 {
        self.inner.replica
    }

    #[getter]
    fn final_time(&self) -> f64 {
        self.inner.final_time
    }

    #[getter]
    fn final_count(&self) -> usize {
        self.inner.final_count
    }

    #[getter]
    fn extinct_at(&self) -> Option<f64> {
        self.inner.extinct_at
    }

    #[getter]
    fn clamp_count(&self) -> u64 {
        self.inner.clamp_count
    }

    /// `X_t(φ)` at the final time, in observable order.
    #[getter]
    fn terminal(&self) -> Vec<f64> {
        self.inner.terminal.clone()
    }

    /// `∫₀ᵗ X_s(φ) ds`, `None` where not accumulated.
    #[getter]
    fn occupation(&self) -> Vec<Option<f64>> {
        self.inner.occupation.clone()
    }

    fn mollified_local_time(&self, x: Vec<f64>, epsilon: f64) -> PyResult<f64> {
        estimator::mollified_local_time(&self.inner, &point(x)?, epsilon).map_err(err)
    }

    /// Tanaka decomposition at `x` (3-d or 2-d) as a dict.
    fn tanaka<'py>(&self, py: Python<'py>, x: Vec<f64>, epsilon: f64) -> PyResult<Bound<'py, PyDict>> {
        let x = point(x)?;
        let d = PyDict::new(py);
        if x.dim() == 3 {
            let t = estimator::tanaka_3d(&self.inner, &x, epsilon).map_err(err)?;
            d.set_item("local_time", t.local_time)?;
            d.set_item("green_term", t.green_term)?;
            d.set_item("terminal_phi", t.terminal_phi)?;
            d.set_item("martingale_residual", t.martingale_residual)?;
            d.set_item("qv_integral", t.qv_integral)?;
        } else {
            let t = estimator::tanaka_2d(&self.inner, &x, epsilon).map_err(err)?;
            d.set_item("local_time", t.local_time)?;
            d.set_item("terminal_g", t.terminal_g)?;
            d.set_item("delta_term", t.delta_term)?;
            d.set_item("martingale_residual", t.martingale_residual)?;
        }
        Ok(d)
    }
}

/// Mean, variance, standard error, min and max.
#[pyfunction]
fn summarize<'py>(py: Python<'py>, samples: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let s = stats::summarize(&samples).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("n", s.n)?;
    d.set_item("mean", s.mean)?;
    d.set_item("variance", s.variance)?;
    d.set_item("std_error", s.std_error)?;
    d.set_item("min", s.min)?;
    d.set_item("max", s.max)?;
    Ok(d)
}

/// One-sample KS distance and p-value against a normal law.
#[pyfunction]
fn ks_against_normal(samples: Vec<f64>, mean: f64, var: f64) -> PyResult<(f64, f64)> {
    let r = stats::ks_against_normal(&samples, mean, var).map_err(err)?;
    Ok((r.ks_distance, r.p_value))
}

/// Runs the analytic bounds grid; returns `(checks, violations)`.
#[pyfunction]
#[pyo3(signature = (log_ratio_pairs=100_000, seed=1))]
fn bounds_suite(py: Python<'_>, log_ratio_pairs: usize, seed: u64) -> PyResult<(usize, usize)> {
    let grid = BoundsGrid {
        log_ratio_pairs,
        seed,
        ..BoundsGrid::default()
    };
    let r = py.detach(|| experiment::bounds_suite(&grid, tol())).map_err(err)?;
    Ok((r.checks.len() + r.log_ratio.pairs, r.violations))
}

#[pymodule]
fn sbm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("C3", kernel_math::C3)?;
    m.add("C31", kernel_math::C31)?;
    m.add("C2", kernel_math::C2)?;
    m.add_class::<TestFunction>()?;
    m.add_class::<SimConfig>()?;
    m.add_class::<Trajectory>()?;
    m.add_function(wrap_pyfunction!(first_moment, m)?)?;
    m.add_function(wrap_pyfunction!(second_moment, m)?)?;
    m.add_function(wrap_pyfunction!(qv_expectation, m)?)?;
    m.add_function(wrap_pyfunction!(variance, m)?)?;
    m.add_function(wrap_pyfunction!(expected_local_time, m)?)?;
    m.add_function(wrap_pyfunction!(mollified_local_time_mean, m)?)?;
    m.add_function(wrap_pyfunction!(local_time_variance, m)?)?;
    m.add_function(wrap_pyfunction!(singular_kernel_check, m)?)?;
    m.add_function(wrap_pyfunction!(log_ratio_sides, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(ks_against_normal, m)?)?;
    m.add_function(wrap_pyfunction!(bounds_suite, m)?)?;
    Ok(())
}
