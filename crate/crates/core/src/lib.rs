//! Simulator for Byzantine-robust distributed optimization with variance
//! reduction and communication compression.
//!
//! The crate provides the building blocks (datasets, losses, compressors,
//! robust aggregators, attacks), the training loops (Byz-VR-MARINA and SGD
//! baselines), closed-form bound calculators and an experiment harness that
//! writes per-seed CSV traces.

pub mod aggregation;
pub mod attacks;
pub mod compression;
pub mod data;
mod error;
pub mod harness;
pub mod optimizers;
pub mod problems;
pub mod rng;
pub mod theory;
pub mod vecops;

pub use error::{Error, Result};
pub use vecops::ParamVector;
