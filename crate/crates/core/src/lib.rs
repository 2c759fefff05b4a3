//! Numerical laboratory for a twisted group C*-algebra with a
//! multiplicative unitary, its Haar weights, antipode and dual.

pub mod error;
pub mod funcspace;
pub mod group;
pub mod kernels;
pub mod par;
pub mod params;
pub mod quadrature;
pub mod report;
pub mod algebra;
pub mod weights;
pub mod unitaries;
pub mod duality;
pub mod antipode;
pub mod harness;

pub use error::{Error, Result};
pub use funcspace::{CylFunction, Primitive, TensorFunction};
pub use params::ModelParams;
