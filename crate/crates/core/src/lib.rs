//! Deterministic simulation and diagnostics for federated averaging with
//! amplified updates under arbitrary client participation.
//!
//! The crate is organised bottom-up:
//!
//! * [`objectives`]: client objective populations with exactly known
//!   smoothness, divergence and optimum constants, plus noisy gradient oracles.
//! * [`participation`]: participation-weight schedules for full, independent,
//!   permutation, periodic and Markov availability patterns.
//! * [`engine`]: the generalized FedAvg loop with periodic amplification and
//!   the wait-for-all baselines.
//! * [`analysis`]: divergence constants, concentration checks, learning-rate
//!   planning and convergence-slope fitting.
//!
//! Randomness is always drawn from counter-derived substreams ([`rng`]), and
//! every reduction runs in ascending client order, so results are
//! bit-identical for any worker count. Data-parallel loops go through
//! [`exec`], which uses rayon when the `parallel` feature is enabled.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod engine;
pub mod error;
pub mod exec;
pub mod fmt;
pub mod linalg;
pub mod objectives;
pub mod participation;
pub mod rng;

pub use error::{Error, Result};
