//! Numerical laboratory for random and non-stationary topological Markov
//! chains: transfer operators, the random Ruelle-Perron-Frobenius triple,
//! exact Wasserstein contraction certificates and their applications.

pub mod apps;
pub mod config;
pub mod driver;
pub mod error;
pub mod fit;
pub mod pipeline;
pub mod potential;
pub mod shift;
pub mod transfer;
pub mod transport;

pub use error::{LabError, Result};
