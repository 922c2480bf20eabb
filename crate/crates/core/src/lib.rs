//! Knothe-Rosenblatt (KR) transport between densities on boxes.
//!
//! * [`densities`]: target and reference families with exact samplers.
//! * [`kr_exact`]: closed-form and quadrature-based KR maps, inversion.
//! * [`param_maps`]: monotone triangular maps with Legendre coefficients and
//!   Jacobian flows built from them.
//! * [`objective`]: the sample KL loss, its gradient, and the optimizer.
//! * [`metrics`]: test NLL, map errors against an exact map, rate fits.
//! * [`harness`]: JSON-configured experiments behind the `krflow` binary.
//!
//! ```
//! use krflow::densities::Density;
//! use krflow::kr_exact::{closed_form_kr, TriangularMap};
//!
//! let f = Density::bivariate_gaussian([0.0, 0.0], [1.0, 1.0], 0.6).unwrap();
//! let g = Density::standard_gaussian(2).unwrap();
//! let s = closed_form_kr(&f, &g).unwrap();
//! let y = s.eval(&[0.6, 1.0]).unwrap();
//! assert!(y[0].abs() < 1e-12 && (y[1] - 1.0).abs() < 1e-12);
//! ```

// `!(a > b)` is used on purpose where NaN must fail a check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod densities;
pub mod error;
pub mod harness;
pub mod kr_exact;
pub mod metrics;
pub mod objective;
pub mod param_maps;
pub mod quadrature;
pub mod seed;
pub mod smoothness;
pub mod triangular;

pub use error::{Error, Result};
