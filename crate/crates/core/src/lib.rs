//! Emulation of design operating characteristics for Bayesian clinical trials.
//!
//! The crate estimates power, false-positive rate and futility probability of a
//! single-analysis Bayesian trial across a parameter space without simulating
//! every scenario. The sampling distribution of the posterior probability of
//! effectiveness `π = P(OR < 1 | y)` is approximated by a Beta density whose
//! shape parameters are interpolated by two Gaussian processes trained on a
//! small space-filling design.
//!
//! Pipeline:
//!
//! 1. [`scmc`] draws a covering sample on the constrained risk simplex.
//! 2. [`design`] clusters it into space-filling centroids and crosses them
//!    with an odds-ratio grid.
//! 3. [`trial_models`] simulates trials and computes `π` for the
//!    Beta-binomial and proportional-odds models.
//! 4. [`emulator`] fits Beta densities and trains the Gaussian processes.
//! 5. [`doc`] turns predictive draws into operating characteristics with
//!    credible intervals; [`study`] runs the replicated accuracy study.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. The `parallel` feature evaluates particles, replicates and
//! restarts on a rayon pool; results are bit-identical to the sequential
//! path because every unit of work draws from its own seeded stream.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod design;
pub mod doc;
pub mod emulator;
mod error;
pub mod linalg;
pub mod optim;
mod par;
pub mod rng;
pub mod scmc;
pub mod special;
pub mod study;
pub mod trial_models;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
