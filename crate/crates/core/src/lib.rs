//! Honesty-alignment toolkit: annotated QA records, self-consistency and
//! accuracy targets, a two-stage confidence probe, training-free baselines
//! and calibration metrics.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the command-line pipeline.

pub mod baselines;
pub mod error;
pub mod judge;
pub mod metrics;
pub mod probe;
pub mod records;
pub mod scalar;
pub mod seed;
pub mod sweep;
pub mod synth;
pub mod targets;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;

/// Double-precision probe parameters.
pub type Probe = probe::ProbeParams<f64>;
/// Single-precision probe parameters.
pub type Probe32 = probe::ProbeParams<f32>;
pub type Pool = probe::TrainingPool<f64>;
pub type Pool32 = probe::TrainingPool<f32>;
pub type Trained = probe::TrainedProbe<f64>;
pub type Eval = sweep::EvalSet<f64>;
