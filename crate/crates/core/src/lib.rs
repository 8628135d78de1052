//! Penalized supervised LDA.
//!
//! Three training regimes share one set of building blocks:
//!
//! * instantiated proportions, optimized jointly with topics and regression
//!   weights ([`train::train_instantiated`]);
//! * end-to-end training through the MAP embedding computed by exponentiated
//!   gradient, differentiated by unrolling its iterations
//!   ([`train::train_end_to_end`] with [`train::Regime::Ideal`]);
//! * end-to-end training through a recognition network fit to that embedding
//!   ([`train::Regime::Approx`]).
//!
//! The [`toybars`] module generates the synthetic bars benchmark and [`eval`]
//! holds heldout metrics and a bag-of-words baseline.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod export;
mod math;
pub mod model;
pub mod objective;
pub mod recognition;
pub mod snapshot;
pub mod toybars;
pub mod train;

pub use error::{Error, Result};
