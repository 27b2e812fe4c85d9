//! Catalytic branching Brownian motion: spectral solver, exact and discretized path samplers,
//! a branching engine, Feynman-Kac moment estimators and a statistical verification harness.

pub mod error;
pub mod config;
pub mod geometry;
pub mod moments;
pub mod engine;
pub mod paths;
pub mod rng;
pub mod special;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
