//! Simulation, estimation, and numerical stability certification for
//! univariate nonlinear autoregressions with (nonlinear) ARCH errors.
//!
//! The model class is
//!
//!   y_t = pi_1 y_{t-1} + ... + pi_{p-1} y_{t-p+1} + g(u_{t-1}) + sigma_t eps_t
//!   sigma_t^2 = zeta_0 omega + alpha_1 zeta_1 e_{t-1}^2 + ... + alpha_q zeta_q e_{t-q}^2
//!
//! where g grows almost like the identity in the tails (the near-unit-root
//! regime), the zeta gates take values in (0, 1], and the innovations are
//! standardized Gaussian, Student-t, or skew-t.
//!
//! Modules:
//! - [`model`]: specifications, recursions, companion-form matrices.
//! - [`dist`]: innovation distributions with density/sampling/moments.
//! - [`stability`]: root/envelope/contraction checks, drift-condition
//!   Monte Carlo certification, polynomial ergodicity verdicts.
//! - [`sim`]: path simulation and sample diagnostics.
//! - [`estim`]: conditional maximum likelihood with standard errors and
//!   residual diagnostics.

// Negated comparisons like !(x > 0.0) are used throughout to reject NaN
// alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dist;
pub mod error;
pub mod estim;
pub mod model;
pub mod optim;
pub mod quad;
pub mod sim;
pub mod stability;

pub use error::{Error, Result};
