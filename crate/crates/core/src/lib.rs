//! Minimax performance bounds for state estimation under finite model
//! uncertainty, and the minimax multiple-model estimator.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`] and [`linalg`]: candidate models, validation, definiteness tests.
//! - [`forward`]: per-model stationary Kalman Riccati solutions.
//! - [`backward`]: pairwise backward recursions and their certificates.
//! - [`bounds`]: the feasibility floor and bisected upper/lower bounds on the
//!   optimal performance level.
//! - [`exact`] and [`interpolation`]: the exact value via the simplex-stacked
//!   recursion, and the quadratic interpolation utilities it rests on.
//! - [`estimator`]: the online filter bank and its min-max combination.
//! - [`config`] and [`experiments`]: configuration files and CSV experiment runs.

pub mod backward;
pub mod bounds;
pub mod config;
pub mod error;
pub mod estimator;
pub mod exact;
pub mod experiments;
pub mod forward;
pub mod interpolation;
pub mod linalg;
pub mod model;

pub use error::{Error, Result};
