//! Inertial first-order optimization with Hessian-driven damping.
//!
//! The crate provides the continuous dynamic
//! `x'' + (alpha/t) x' + beta(t) H(x) x' + b(t) grad f(x) = 0`,
//! its proximal discretization (IPAHD and the Moreau-envelope variant for
//! nonsmooth objectives), the gradient discretization IGAHD with its FISTA
//! specialization, and the IGAHD-RLS variant for regularized least squares.
//! The [`diagnostics`] module turns the Lyapunov energies behind these
//! methods into checkable quantities.

pub mod algorithms;
pub mod conditions;
pub mod diagnostics;
pub mod dynamics;
mod error;
pub mod problems;
pub mod prox;

pub use error::{Error, Result};

/// Dense vector type used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix type used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
