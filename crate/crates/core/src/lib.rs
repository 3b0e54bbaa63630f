//! Conditioning analysis of the Hessians that arise in hybrid
//! ensemble-variational data assimilation.
//!
//! The crate builds static, ensemble and hybrid background error covariances
//! on a periodic one-dimensional grid, assembles the unpreconditioned and
//! control-variable-transformed Hessians, evaluates closed-form bounds on
//! their condition numbers, and runs the parameter sweeps and conjugate
//! gradient studies that compare the bounds with exact spectra.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod covariance;
pub mod error;
pub mod experiments;
pub mod hessian;
pub mod io;
pub mod linalg;
pub mod observation;
pub mod rng;
pub mod sentinel;
pub mod solver;

pub use error::{Error, Result};
