//! Finite-dimensional toolkit for sign-character analysis on discrete cubes:
//! Walsh transforms, independent character families over GF(2^m), moment and
//! sign-extremal norms, L1 operator norms, lower-bound certificates, and
//! convex-hull separation experiments.

pub mod designs;
pub mod error;
pub mod hypercube;
pub mod lambda;
pub mod lemma;
pub mod operators;
pub mod par;
pub mod separation;

pub use error::{Error, Result};
