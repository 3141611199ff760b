//! Simulation and verification toolkit for distribution-dependent SDEs
//! driven by Lévy noise.

pub mod error;
pub mod levy_model;
pub mod measure;
pub mod numerics;
pub mod kernel;
pub mod krylov;
pub mod sampler;
pub mod solver;

pub use error::{Error, Result};
