//! Simulation and verification toolkit for critical branching random walks
//! on Z^d, mostly d = 8.
//!
//! Modules follow the objects: offspring laws, Galton–Watson trees through
//! their depth-first queue process, slices of the two-sided invariant tree,
//! lattice labels, Green tables, generating-function identities and the Monte
//! Carlo experiments built on top of them.

pub mod dfqp;
pub mod error;
pub mod greens;
pub mod offspring;
pub mod rng;
pub mod runner;
pub mod lattice;
pub mod experiments;
pub mod mc;
pub mod stats;
pub mod theta;
pub mod tree;

pub use error::{Error, Result};
