//! Strong-convergence experiments for the Euler–Maruyama scheme with
//! Dini-continuous drifts.
//!
//! The crate provides moduli of continuity and their class checks, a model
//! catalog, a deterministic dyadic Brownian generator, continuous-time
//! Euler–Maruyama integrators for the non-degenerate and kinetic cases, rate
//! studies with bound-curve comparisons, truncation of unbounded models and
//! quantitative checks of the Kolmogorov-equation estimates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brownian;
pub mod cli;
pub mod cutoff;
pub mod error;
pub mod integrator;
pub mod kolmogorov;
pub mod linalg;
pub mod models;
pub mod modulus;
pub mod parallel;
pub mod quadrature;
pub mod rates;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
