//! Finite-dimensional Koopman and transport (Perron–Frobenius) operators
//! for dynamical systems: dictionaries of observables, operator matrices
//! built by exact pullback / EDMD / generator projection, observability
//! analysis, Grammian identities for linear systems, and grid-based density
//! transport.

pub mod catalog;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod identification;
pub mod io;
pub mod koopman;
pub mod linalg;
pub mod linear_analysis;
pub mod observables;
pub mod sampling;
pub mod transport;

pub use error::{CoreError, Result};
