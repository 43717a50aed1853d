//! Concept-drift adaptation for streaming binary (malware/benign) classifiers.
//!
//! The crate bundles:
//!
//! - a from-scratch dense network with Adam and dropout ([`nn`]),
//! - monthly-batch stream loading, standardization, and a synthetic
//!   gradual-drift generator ([`data`]),
//! - threshold-based pseudo-label self-training with asymmetric
//!   malware/benign selection ([`adapt`]),
//! - uncertainty-sampling active learning and the combined schedules
//!   ([`active`]),
//! - an online linear-ensemble baseline with pseudo-label retraining
//!   ([`de`]),
//! - prequential metrics and confidence exports ([`metrics`]),
//! - the experiment runner behind the CLI ([`experiment`]).
//!
//! Malware is the positive class (label 1) throughout. Every source of
//! randomness derives from one root seed ([`seed`]), so runs are reproducible
//! byte for byte.

pub mod active;
pub mod adapt;
pub mod data;
pub mod de;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod metrics;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};
