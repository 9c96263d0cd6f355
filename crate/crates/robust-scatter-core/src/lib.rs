//! Robust principal component analysis built on a trimmed, re-weighted
//! Tyler-type scatter estimator.
//!
//! Observations are weighted by the hard-threshold exponential weight
//! `w(u) = exp(-u) * 1{exp(-u) > alpha}` of their Mahalanobis distance, so
//! points outside the ball `d(x, mu, V) < ln(1/alpha)` receive no weight at all.
//! The fixed point depends on the scale `a` of the initial scatter; the
//! [`tuning`] module picks `a` from the active-ratio curve.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, threading and
//! the command-line tool live in the companion `robust-scatter` crate.
//!
//! ```
//! use robust_scatter_core::{estimator, weights::WeightSpec, DataSet};
//! use nalgebra::DMatrix;
//!
//! let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
//! let data = DataSet::new(x).unwrap();
//! let init = estimator::LocationScatter::identity(2, false);
//! let fit = estimator::fit_sppca(&data, 1.0, &init, &WeightSpec::default(), &Default::default()).unwrap();
//! assert!(fit.converged);
//! assert_eq!(fit.active_ratio, 1.0);
//! ```
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod data;
pub mod error;
pub mod estimator;
pub mod exec;
mod linalg;
pub mod metrics;
pub mod quadrature;
pub mod scale;
pub mod simgen;
pub mod spline;
pub mod tuning;
pub mod weights;

pub use data::DataSet;
pub use error::{Error, Result};
pub use estimator::{FitOptions, FitResult, LocationScatter, PcaModel};
pub use exec::{ParMap, Sequential};
pub use weights::{WeightKind, WeightSpec};
