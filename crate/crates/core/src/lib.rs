//! Learning spherical Gaussian mixtures from moment tensors.
//!
//! The crate is organised bottom-up:
//!
//! - [`symtensor`]: symmetric tensors stored as homogeneous polynomials, apolar product.
//! - [`hankel`]: catalecticant matrices and interpolation degree of point sets.
//! - [`waring`]: Waring decomposition of identifiable tensors by SVD plus
//!   simultaneous diagonalisation, with a damped Gauss-Newton polish.
//! - [`moments`]: the order 1-3 moment forms of a spherical mixture and the
//!   parameter recovery built on top of the decomposition.
//! - [`gmm`]: densities, sampling, EM and the four EM initialisers.
//! - [`metrics`]: BIC, adjusted Rand index and error rate.
//! - [`pca`], [`io`], [`benchmark`]: preprocessing, file formats and the
//!   simulation harness used by the command-line tool.

pub mod benchmark;
pub mod error;
pub mod gmm;
pub mod hankel;
pub mod io;
mod linalg;
pub mod metrics;
pub mod moments;
pub mod pca;
pub mod symtensor;
pub mod waring;

pub use error::{Error, Result};
pub use gmm::{GmmParams, Responsibilities};
pub use symtensor::{SymmetricTensor, WaringDecomposition};
