//! Numerical laboratory for f-invariant solutions of the Paneitz-type equation
//! `Δ²u − αΔu + βu = |u|^{q−1}u` on closed manifolds carrying a proper
//! isoparametric function, reduced to one dimension along the foliation.

pub mod banded;
pub mod blowup;
pub mod discretize;
pub mod error;
pub mod geometry;
pub mod io;
mod compensated;
mod seed;
pub mod solvers;
mod spline;
pub mod variational;

pub use error::{Error, Result};
