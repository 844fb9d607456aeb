//! Local times of super-Brownian motion started from a point mass.
//!
//! The crate is split into an analytic layer and a Monte Carlo layer that
//! are checked against each other:
//!
//! * [`kernel_math`]: heat kernels, Green functions, singular moment
//!   quadrature and the explicit bounds (log-ratio inequality, singular
//!   kernel bound `C(α)/|x|^α`, occupation bound `2/(d-1)·E|B_t|`).
//! * [`moment_oracle`]: first and second moments and expected quadratic
//!   variation of `X_t(φ)` for `X_0 = δ_0`, computed by quadrature.
//! * [`particle_sim`]: critical binary branching Brownian motion with `N`
//!   particles of mass `1/N`, branching at rate `N`, with streaming
//!   occupation accumulators.
//! * [`estimator`]: mollified local times and Tanaka decompositions in
//!   `d = 2, 3`, fluctuation statistics.
//! * [`stats`]: ensemble summaries, Kolmogorov–Smirnov distance against a
//!   normal reference, correlation probes, L¹ boundedness reports.
//! * [`experiment`]: replica ensembles and the report types shared by the
//!   command line driver and the acceptance suite.

pub mod error;
pub mod estimator;
pub mod experiment;
pub mod kernel_math;
pub mod moment_oracle;
pub mod particle_sim;
pub mod stats;
pub mod test_function;

pub use error::{Error, Result};
pub use kernel_math::{QuadratureResult, SpatialPoint, Tolerance};
pub use test_function::TestFunction;
