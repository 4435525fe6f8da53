//! Maximum-likelihood estimation and asymptotic uncertainty for the
//! Admixture Model with biallelic markers.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the data types and the log-likelihood with its derivatives.
//! * [`estimation`] computes MLEs (EM and a supervised projected Newton polish).
//! * [`fisher`] builds the expected information blocks and checks the
//!   identifiability conditions.
//! * [`asymptotics`] turns the information into a Gaussian law (interior) or
//!   the law of a metric projection onto a cone (boundary).
//! * [`uniqueness`] diagnoses non-identifiability of unsupervised estimates.
//! * [`simulation`] generates data and runs the Monte Carlo experiments.
//! * [`io`] reads and writes the ADMIXTURE-style text formats and configs.

pub mod asymptotics;
pub mod estimation;
pub mod fisher;
pub mod io;
pub mod model;
pub mod simulation;
pub mod stats;
pub mod uniqueness;

mod error;

pub use error::{Error, Result, Unit};
pub use model::{
    AlleleFreqMatrix, AncestryMatrix, GenotypeMatrix, ModelConfig, SuccessProbMatrix, MISSING,
};
