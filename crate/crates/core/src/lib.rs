//! Constant-envelope multiuser precoding for the massive-MISO downlink.
//!
//! The transmitter drives every antenna at the same fixed amplitude and
//! steers only phases. This crate designs such transmit blocks by
//! minimizing a smoothed worst-case symbol margin with projected-gradient
//! methods, ships the classical baselines they are compared against, and
//! wraps everything in a deterministic Monte-Carlo error-rate harness.

pub mod baselines;
pub mod channel;
pub mod constellation;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod objective;
pub mod rng;
pub mod solver;

pub use baselines::{MuiMinConfig, PrecodeOutput};
pub use channel::{Channel, CEPoint, SymbolBlock};
pub use constellation::QamConstellation;
pub use error::{Error, Result};
pub use harness::{
    csv_string, run_runtime_bench, run_sweep, BenchRecord, BerRecord, ExperimentConfig, Method,
    CSV_HEADER,
};
pub use solver::{solve, solve_fpg, solve_pg, InitStrategy, SolverConfig, SolverReport};
