//! Multivariate Hawkes processes with exponential kernels: simulation,
//! gap-ridden observation windows, and estimation that accounts for the
//! unobserved history before each window.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimator;
pub mod gaps;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod simulator;

pub use error::{HawkesError, Result};
pub use estimator::{fit, fit_mhp, BoundaryMode, FitConfig, FitResult};
pub use model::{BoundaryIntensities, EventData, ModelParams, Window, WindowSet};
