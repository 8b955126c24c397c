//! Symplectic path invariants, Hamiltonian and magnetic flows on the plane
//! and the 2-torus, periodic-orbit shooting and index bookkeeping for
//! filtered Floer complexes.

// `!(x > 0.0)` is the NaN-rejecting form throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod floer;
pub mod flow;
pub mod io;
pub mod magnetic;
pub mod orbit;
pub mod path;
pub mod random;
pub mod symp;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
