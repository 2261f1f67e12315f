//! Pool-based sequential discovery with Bayesian neural networks and a
//! human expert in the loop.

pub mod bnn;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod engine;
pub mod error;
pub mod expert;
pub mod policy;
pub mod rng;
pub mod scoring;
pub mod synth;
pub mod uncertainty;

pub use config::RunConfig;
pub use error::{Error, Result};
