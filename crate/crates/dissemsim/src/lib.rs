//! Experiments, file formats and the command-line front end of the
//! dissemination simulator. The simulation kernels live in `dissem-core`.
// `!(x >= 0.0)` guards are written that way on purpose: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
mod error;
pub mod experiments;
pub mod io;

pub use error::{Error, Result};
