//! Token-incentivized, locally differentially private federated learning.
//!
//! The crate is `no_std` (with `alloc`) and holds everything that is pure
//! computation: the token economy, the closed-form game functions, the
//! two-point LDP mechanism, a small MLP with FedAvg aggregation, client
//! strategy together with a brute-force Nash checker, and the round engine
//! that ties them together. File formats, the CLI and dataset IO live in the
//! `tokenfl` companion crate.

#![no_std]
// `!(x >= 0.0)` style guards are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod economy;
pub mod engine;
pub mod error;
pub mod learning;
pub mod mechanisms;
pub mod privacy;
pub mod rng;
pub mod strategy;

pub use error::{Error, Result};

/// Round index. Round 0 is the initial model handed out for free; training
/// rounds start at 1.
pub type Round = u32;
