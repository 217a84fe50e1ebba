//! Non-Abelian geometric phases of second-quantized Hamiltonians and the
//! particle-number threshold.

pub mod algebra;
pub mod error;
pub mod expr;
pub mod fock;
pub mod geometry;
pub mod holonomy;
pub mod jet;
pub mod linalg;
pub mod models;
pub mod pnt;
pub mod report;
pub mod spectral;

pub use error::{Error, Result};
