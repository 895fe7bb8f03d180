//! Terramechanics simulation and terrain-parameter estimation toolkit.
//!
//! The crate implements a complete pipeline for data-driven off-road
//! vehicle dynamics:
//!
//! 1. [`terramech`] — semi-empirical rigid-wheel contact model (Bekker
//!    pressure–sinkage, Janosi–Hanamoto shear) integrated over the
//!    contact arc; the ground-truth force oracle.
//! 2. [`lhs`] — Latin hypercube sampling of the 10-D wheel/terrain
//!    input space and generation of labeled force datasets.
//! 3. [`mlp`] — feed-forward surrogate network with exact analytic
//!    jacobian and Hessian-vector products.
//! 4. [`train`] — Levenberg–Marquardt training with Bayesian
//!    regularization and best-of-ensemble selection.
//! 5. [`bicycle`] — planar 3-DoF single-track vehicle model.
//! 6. [`ukf`] — unscented Kalman filter estimating the terrain sinkage
//!    exponent alongside the vehicle state.
//! 7. [`sim`] — double-axle plant simulation and Gaussian sensor model.
//! 8. [`eval`] — prediction-horizon scoring and force-accuracy metrics.

pub mod bicycle;
pub mod error;
pub mod eval;
pub mod lhs;
pub mod mlp;
pub mod sim;
pub mod terramech;
pub mod train;
pub mod ukf;

pub use error::{Result, TerraError};
