//! Channel synthesis and multipath parameter extraction for direction-scan
//! sounding, where a directional antenna on a rotator scans the angular space
//! and traces a virtual spherical array.
//!
//! * [`geometry`]: scan grids, rotator antenna positions, spherical and plane
//!   wavefront observation geometry.
//! * [`waveform`]: delay-domain kernels and antenna patterns.
//! * [`synth`]: CIR tensor synthesis, phase instability, noise, CIRT files.
//! * [`sage`]: DSS-o-SAGE, the PWF/SWF SAGE baselines and noise elimination.
//! * [`evalkit`]: RMSE, fake power ratio, numerical CRLB, channel statistics.
//! * [`harness`]: JSON configs, Monte Carlo sweeps, benchmarks and the CLI.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evalkit;
pub mod geometry;
pub mod harness;
pub mod sage;
pub mod synth;
pub mod waveform;

pub use error::{Error, Result};
pub use num_complex::Complex64;
