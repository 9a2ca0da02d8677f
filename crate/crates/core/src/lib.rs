//! Exact laws and Monte Carlo experiments for conditioned Galton-Watson trees,
//! Brownian Lévy trees and continuous-state branching processes.

pub mod acceptance;
pub mod cb;
pub mod continuum;
pub mod discrete_lab;
pub mod error;
pub mod exact;
pub mod offspring;
pub mod par;
pub mod rng;
pub mod samplers;
pub mod stats;
pub mod tree;

pub use error::{Error, Result};
