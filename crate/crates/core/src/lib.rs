//! Sparse functional linear regression with RKHS-regularized covariance
//! estimation.

pub mod autocov;
pub mod cli;
pub mod crosscov;
pub mod data;
pub mod error;
pub mod func;
pub mod gram;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod mean;
pub mod model;
mod pairs;
pub mod quadrature;
pub mod regression;
pub mod sim;
pub mod surface;
pub mod tuning;

pub use autocov::{eigensystem, fit_autocov, EigenSystem, FittedSymSurface};
pub use crosscov::{
    a_hat_surfaces, fit_crosscov, singular_system, stationarity_residual, CrossCovProblem, FittedSurface,
    SingularSystem,
};
pub use data::LongitudinalSample;
pub use error::{Error, Result};
pub use func::{Curve, Surface};
pub use kernel::{Domain, KernelForm, KernelSpec};
pub use mean::{evaluate_function, fit_mean, FittedFunction};
pub use quadrature::{gauss_legendre, QuadratureRule};
