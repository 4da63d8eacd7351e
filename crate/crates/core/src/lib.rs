#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Class-specific discriminant analysis cast as regression.
//!
//! A class-specific model maps samples into a low-dimensional space where the
//! positive class collapses onto its mean and every other sample is pushed
//! away from it. Fitting reduces to least squares against orthonormal target
//! rows built from the labels ([`targets`]). The same targets drive three
//! model families:
//!
//! * [`linear`]: ridge regression on class-mean centered inputs, plus the
//!   generalized-eigenproblem formulation used as an oracle;
//! * [`kernel`]: regression on a reduced kernel matrix against a small set of
//!   reference vectors;
//! * [`neural`]: a sigmoid MLP trunk with a linear head, shared by all
//!   verification problems through stacked targets.
//!
//! [`eval`] implements the one-vs-rest verification protocol and the equal
//! error rate; [`io`] holds file formats, synthetic data, the experiment
//! runner and the benchmark harness.

pub mod error;
pub mod eval;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod linear;
pub mod neural;
pub mod parallel;
pub mod targets;

pub use error::{Error, Result};
pub use linalg::Matrix;
