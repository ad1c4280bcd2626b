//! Finite element solver for the Schrödinger–Poisson system on the unit cube.

pub mod error;
pub mod fem;
pub mod lab;
pub mod linsolve;
pub mod mesh;
pub mod occupancy;
pub mod oracle;
pub mod scf;
pub mod spectrum;

pub use error::{Error, Result};
