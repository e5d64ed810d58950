//! Likelihood ascent search (LAS) detection for large V-BLAST MIMO systems.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: Rayleigh channels, Gray-coded QAM, AWGN, and the real-valued
//!   decomposition `y = H x + n` every detector works in.
//! - [`detect`]: MF/ZF/MMSE initial filters, the one-symbol-update LAS
//!   search, and an exhaustive ML oracle.
//! - [`asymptotics`]: update inequalities, ML noise regions, and the
//!   column-correlation statistics whose concentration drives the
//!   large-system behavior of LAS.
//! - [`harness`]: seeded, parallel Monte Carlo experiments (BER sweeps,
//!   SNR-for-target-BER, LAS/ML agreement).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod detect;
mod error;
pub mod harness;
pub mod model;
pub mod rng;

pub use detect::{las_detect, ml_bruteforce, DetectionResult, Initializer};
pub use error::{Error, Result};
pub use model::{Constellation, RealModel, SymbolVector};
