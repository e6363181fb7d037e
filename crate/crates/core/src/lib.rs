//! Simulation, estimation and bounds for a Meissner-levitated spinning micromagnet
//! used as a cryogenic pressure gauge.
//!
//! - [`model`]: gas damping, gauge mapping, quality factor, breaking limit.
//! - [`precession`]: gyromagnetic rigid-body dynamics, nutation and precession lines.
//! - [`spindown`]: thermal spin-down, the log-frequency state-space model, synthetic pickup signals.
//! - [`estimation`]: frequency tracking, decay fits, pressure calibration and inference.
//! - [`crlb`]: Cramér–Rao bounds on the decay rate and the pressure floors they imply.
//! - [`cli`], [`config`], [`io`]: the `rotor` tool and its file formats.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod crlb;
pub mod error;
pub mod estimation;
pub mod io;
pub mod model;
pub mod precession;
pub mod spectral;
pub mod spindown;

pub use error::{Error, Result};
