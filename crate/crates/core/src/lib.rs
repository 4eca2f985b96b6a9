//! Kernels for simulating packet dissemination ("broadcast of data flows")
//! over networks where every arriving packet must reach every node.
//!
//! The crate is `no_std` and needs only `alloc`. It contains:
//!
//! * [`topology`]: network specifications, the builders used by the
//!   experiments, and the exhaustive cut-condition checker.
//! * [`engine`]: the continuous-time Markov chain simulator for the
//!   Oldest-Useful, Random-Useful, Selfish and Free disciplines, plus exact
//!   specialised simulators for the reshuffling and free systems.
//! * [`metrics`]: observers and estimators (time averages, age of
//!   information, sojourn samples, useful-count histograms, replication
//!   statistics).
//! * [`transform`]: the space-time transform that maps stages onto `[0, 1]`
//!   and normalises time by the free-system sojourn.
//! * [`hydro`]: the deterministic transport model of the large reshuffling
//!   system.
//!
//! File formats, experiment orchestration and the command-line front end
//! live in the `dissemsim` crate.
#![no_std]
#![deny(unsafe_code)]
// `!(x >= 0.0)` guards are written that way on purpose: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod engine;
mod error;
pub mod hydro;
pub mod metrics;
mod rng;
pub mod topology;
pub mod transform;

pub use error::{Error, Result};
pub use rng::RngStream;
