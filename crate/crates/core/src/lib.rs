//! Discrete potential theory on Z^d: capacities, equilibrium measures,
//! random interlacements, confined walks and their capacity-ratio phase
//! transitions.

pub mod error;
pub mod experiments;
pub mod interlace;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod potential;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod walker;

pub use error::{Error, Result};
