//! Mass-based Maxwell-Stefan reaction-diffusion systems: flux inversion,
//! finite-volume simulation, chemical equilibria and linear stability.

pub mod cli;
pub mod equilibria;
pub mod error;
pub mod kinetics;
pub mod linalg;
pub mod mixture;
pub mod scenario;
pub mod solver;
pub mod stability;
pub mod verify;

pub use error::{Error, Result};
