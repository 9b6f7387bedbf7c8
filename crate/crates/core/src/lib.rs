//! Next-month malaria prevalence forecasting from monthly aggregates.
//!
//! - [`dataset`]: monthly records, CSV schema, lag-window task encoding
//! - [`linear`]: OLS, ridge, elastic net / LASSO, LARS paths, AIC/BIC
//! - [`nonlinear`]: random forest and RBF-kernel SVR
//! - [`evaluation`]: metrics, splits, cross-validated selection, repeated hold-out
//! - [`pipeline`]: final elastic-net training, validation months, tolerance band, novelty flags
//! - [`synth`]: seeded synthetic monthly datasets

// parameter checks are written as `!(x > 0.0)` so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod json;
pub mod linear;
pub mod nonlinear;
pub mod pipeline;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
