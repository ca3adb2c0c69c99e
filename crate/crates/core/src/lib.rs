//! Numerical toolkit for the amplitude-constrained AWGN channel `Y = X + Z`.
//!
//! The crate computes capacity-achieving discrete input distributions on
//! `[-A, A]` with KKT certification, evaluates the Gaussian mixture output
//! densities they induce, measures KL/TV/chi-squared divergences on the line
//! and on the circle, and checks the wrapped-mixture Fourier identities
//! (trigonometric moment matrices, Parseval form of chi-squared, low-rank
//! bounds) together with every closed-form capacity and density bound used
//! by the support-size analysis.
//!
//! Modules map one-to-one onto the subsystems:
//! - [`quad`]: adaptive Gauss-Kronrod quadrature and periodic trapezoid rules
//! - [`mixture`]: discrete inputs, mixture output densities, entropies,
//!   mutual information, marginal information density
//! - [`divergence`]: TV / KL / chi-squared between evaluable densities
//! - [`wrapped`]: wrapping operator, wrapped densities, Fourier coefficients,
//!   trigonometric moment matrices
//! - [`solver`]: Blahut-Arimoto weight updates, location ascent, support
//!   growth, KKT certification
//! - [`bounds`]: closed-form bounds and the main inequality chain

pub mod bounds;
pub mod divergence;
pub mod error;
pub mod mixture;
pub mod quad;
pub mod solver;
pub mod wrapped;

pub use error::{Error, Result};
pub use mixture::{AmplitudeConstraint, DiscreteInput, MixtureDensity};
pub use quad::QuadratureSpec;
pub use solver::{KktReport, SolverConfig, SolverResult};
