//! Certification of positivity conditions for global surfaces of section of flows on
//! model 3-manifolds.

pub mod error;
pub mod geometry;
pub mod measures;
pub mod boundary;
pub mod cohomology;
pub mod orbit;
pub mod section;
pub mod cli;

pub use error::{Error, Result};
