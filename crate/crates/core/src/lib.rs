//! Link-level simulator and trainable predictive beamformer for an
//! ISAC-assisted vehicle-to-infrastructure downlink.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod kinematics;
pub mod model_file;
pub mod nn;
pub mod rng;
pub mod sensing;

pub use config::{SimConfig, ThetaMode};
pub use error::{Error, Result};
