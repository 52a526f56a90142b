//! Numerical laboratory for symmetric simple exclusion and stirring processes.
//!
//! The crate provides, on truncated lattices and tori:
//!
//! - exact transient solvers for the forward equations of the unlabeled
//!   exclusion process and the labeled stirring process (uniformization),
//! - the discrete heat equation for the mean occupation under diffusive
//!   speeding,
//! - evaluation of the Gaussian heat-kernel bound (Legendre transform of
//!   `w^2 cosh w`, rate function, regime classification, tail fits),
//! - event-driven kinetic Monte Carlo for labeled particles on the infinite
//!   lattice and for full occupation fields on tori,
//! - the v-function correlation hierarchy and two-time correlations with
//!   both Duhamel (exact) and Monte Carlo evaluation,
//! - the cylinder-function calculus behind the Boltzmann-Gibbs statistic,
//! - a numerical audit of the logarithmic Sobolev inequality on cubes with
//!   canonical-path construction.

pub mod bg;
pub mod bound;
pub mod correlations;
pub mod error;
pub mod generator;
pub mod io;
pub mod lattice;
pub mod lsi;
pub mod simulate;
pub mod solver;

pub use error::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
