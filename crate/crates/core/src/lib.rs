//! Interpretable machine-learning workbench engine.

pub mod compare;
pub mod data;
pub mod diagnose;
pub mod error;
pub mod experiment;
pub mod explain;
pub mod interpret;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod stats;

pub use error::{Error, ErrorClass, Result};
