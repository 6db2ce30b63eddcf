//! Desk-scale numerical laboratory for weighted multilinear singular
//! integrals, their generalized commutators and Fréchet–Kolmogorov
//! compactness diagnostics.

pub mod acceptance;
pub mod commutators;
pub mod compactness;
pub mod error;
pub mod funcspace;
pub mod kernels;
pub mod numerics;
pub mod operators;
pub mod rng;
pub mod weights;

pub use error::{Error, Result};
