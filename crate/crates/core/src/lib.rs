//! Training and evaluation engine for a physics-guided multi-task network
//! that predicts particle drag force from neighbor geometry, together with
//! its ablation baselines, evaluation metrics and experiment harness.

pub mod data;
pub mod error;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod nn;

pub use error::{Error, Result};
