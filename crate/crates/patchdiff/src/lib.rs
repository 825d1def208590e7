//! Simulation and operator tooling for a finite-population model of two
//! species spread over unevenly sized habitat patches.
//!
//! The crate covers both sides of the scaling picture. On the stochastic
//! side it simulates the discrete reproduction/exchange chain and its
//! diffusion limit, with deterministic parallel replication. On the
//! analytic side it applies the generator and reproduction operators to
//! polynomials exactly and exponentiates them on finite-degree spaces, so
//! Monte Carlo output can be checked against closed-form expectations.

pub mod absorption;
pub mod diffusion;
pub mod error;
pub mod grid;
pub mod harness;
pub mod model;
pub mod poly;
pub mod semigroup;
pub mod wfchain;
pub mod tolerances;

pub use error::{Error, Result};
