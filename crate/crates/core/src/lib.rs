//! Vacant set of random walks on supercritical Erdős–Rényi graphs: sampling,
//! walk and exploration processes, Galton-Watson capacity, and critical
//! parameter solvers.

pub mod cli;
pub mod critical;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod gw;
pub mod exploration;
pub mod walk;

pub use error::{Error, Result};
