//! Command-line driver for noisy natural gradient training: CSV input,
//! layered configuration, JSON reports and the self-check suites.

pub mod check;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
