//! Transition densities and heat-kernel machinery for SDEs driven by
//! symmetric, possibly tempered, stable-like Levy processes:
//!
//! - [`levy`]: the driving process (spectral measure, tempering,
//!   characteristic exponent, jump sampling, assumption validation);
//! - [`flow`]: the deterministic drift flow and transported distances;
//! - [`frozen`]: Fourier inversion of the frozen-process density;
//! - [`bounds`]: two-sided bound profiles and sandwich reports;
//! - [`parametrix`]: the parametrix kernel, time-space convolution and
//!   series summation;
//! - [`mc`]: jump-splitting Monte Carlo simulation and empirical
//!   densities;
//! - [`cli`]: configuration-driven orchestration of the above.
//!
//! Start from the runnable programs in `examples/` — each one exercises a
//! major capability end to end.

pub mod bounds;
pub mod cli;
pub mod error;
pub mod flow;
pub mod frozen;
pub mod levy;
pub mod linalg;
pub mod mc;
pub mod parametrix;
pub mod quad;
pub mod sphere;

pub use error::{Error, Result};
