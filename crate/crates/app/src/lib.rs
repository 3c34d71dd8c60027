//! Command-line and HTTP front end for `crbgate-core`: scene persistence,
//! heatmaps, Monte Carlo studies, search gating and tracking metrics.

pub mod api;
pub mod cli;
pub mod error;
pub mod ops;
pub mod store;

pub use error::{AppError, ErrorCode};
