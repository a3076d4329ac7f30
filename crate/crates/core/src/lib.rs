//! Monte Carlo testbed for entangled clocks.
//!
//! Two parties tick whenever their detector registers `+1` on a shared pair.
//! The crate compares the synchronized tick rate of singlet pairs with local
//! hidden variable models, estimates CHSH violations with finite-sample
//! guarantees, and runs the certified-private-time protocol against
//! playback adversaries.

pub mod analytic;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod models;
pub mod rng;
pub mod timeline;

pub use error::{Error, Result};
