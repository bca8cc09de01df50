//! Generalized compensated derivatives and comparative-statics matrices for
//! equality-constrained optimization problems.

pub mod config;
pub mod csm;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod jet;
pub mod linalg;
pub mod model;
pub mod report;
pub mod sensitivity;
pub mod analysis;
pub mod benchmarks;
pub mod solver;

pub use error::{Error, Result};
