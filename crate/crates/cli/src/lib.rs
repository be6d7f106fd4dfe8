//! Run orchestration for `mcmflow-core`: configuration files, presets, run
//! directories, verification, convergence sweeps and plots.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod converge;
pub mod error;
pub mod plot;
pub mod runner;
pub mod verify;

pub use config::{Config, ProblemKind};
pub use error::CliError;
