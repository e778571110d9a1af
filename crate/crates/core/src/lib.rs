//! Filtering, detection, structural checks, equilibrium computation and
//! stochastic search for finite-state partially observed Markov models.

pub mod csv;
pub mod detect;
pub mod dp;
pub mod error;
pub mod estimate;
pub mod grid;
pub mod games;
pub mod hmm;
pub mod lp;
pub mod markov;
pub mod orders;
pub mod par;
pub mod rng;
#[cfg(feature = "cli")]
pub mod scenario;
pub mod search;
pub mod social;

pub use error::{Error, Result};
pub use markov::{Belief, ObservationMatrix, StochasticMatrix};
pub use rng::RngStream;
