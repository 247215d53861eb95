//! Noisy natural-gradient variational inference for Bayesian neural networks.
//!
//! The crate is `no_std` with `alloc`. File formats, the command-line driver
//! and parallel execution live in the `nng` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bench;
mod error;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod oracle;
pub mod posterior;
pub mod rng;
pub mod special;

pub use error::{Error, Result};
