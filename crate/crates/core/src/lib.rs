//! Desk-scale machinery for rank-one perturbations of self-adjoint operators.
//!
//! The crate models Borel measures on the line with an explicit Lebesgue
//! decomposition, evaluates their Borel/Cauchy transforms and boundary
//! values, perturbs them through the secular equation of a rank-one update,
//! materializes the spectral-representation operator between the weighted
//! spaces as a finite matrix, builds regularized Cauchy-transform operators
//! with two-weight A2 scans, converts measures to and from Jacobi recurrence
//! coefficients, and evaluates divergence criteria that certify the absence
//! of singular spectrum on an interval.

pub mod cauchy;
pub mod criterion;
pub mod error;
pub mod jacobi;
pub mod linalg;
pub mod measure;
pub mod quadrature;
pub mod rank_one;

pub use error::{Error, Result};
