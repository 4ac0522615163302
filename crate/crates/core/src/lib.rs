//! Consistent recalibration (CRC) of one-factor Vasiček and
//! Cox-Ingersoll-Ross short-rate models.
//!
//! A CRC model glues together Hull-White extended affine models whose
//! coefficients follow their own stochastic process. At every step the
//! time-dependent drift `θ` is recalibrated to the prevailing forward
//! curve, so the initial term structure is matched at all times while the
//! coefficients move.
//!
//! Modules, bottom up:
//!
//! * [`curves`]: grids, yields, forwards, bond prices
//! * [`affine`]: Riccati functions, HJM coefficients, curve operator
//! * [`volterra`]: the Volterra operator and calibration
//! * [`samplers`]: random streams, short-rate and parameter steps
//! * [`crc`]: the stepping engine and path ensembles
//! * [`estimate`]: realized covariations and coefficient estimators
//! * [`analytics`]: closed-form oracles and Monte Carlo statistics
//! * [`io`]: file formats and run manifests

// `!(x > 0.0)` is used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affine;
pub mod analytics;
pub mod crc;
pub mod curves;
pub mod error;
pub mod estimate;
pub mod io;
pub mod samplers;
pub mod volterra;

pub use error::{AdmissibilityError, CrcError, Result};
