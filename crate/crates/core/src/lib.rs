//! Max-min fair antenna position optimization for an uplink multi-user MISO
//! link assisted by an amplify-and-forward fluid antenna relay (FAR).
//!
//! The crate is organized bottom-up:
//!
//! - [`config`]: system parameters, solver knobs, seeded random streams.
//! - [`channel`]: field-response channel model and its assembly from antenna
//!   positions.
//! - [`metrics`]: effective gains, SINRs and rates.
//! - [`surrogate`]: Taylor bounds, concave quadratic minorizers and constraint
//!   linearizations used by the successive convex approximation.
//! - [`solver`]: the 2-D QP, the per-antenna alternating optimizer and the
//!   outer max-min loop.
//! - [`baselines`]: the `Fixed` and `UFar` comparison schemes.
//! - [`experiments`]: Monte Carlo sweeps, CSV emission and summaries.
//! - [`selftest`]: quick oracle checks runnable from the command line.
//!
//! All lengths are expressed in carrier wavelengths.

pub mod baselines;
pub mod channel;
pub mod config;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod selftest;
pub mod solver;
pub mod surrogate;

pub use error::{Error, Result};

/// Complex double used for all channel quantities.
pub type C64 = num_complex::Complex<f64>;

/// A point in one of the square antenna regions.
pub type Position = nalgebra::Vector2<f64>;
