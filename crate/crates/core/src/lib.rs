//! Kennedy-O'Hagan calibration of computer models in Matérn native spaces.
//!
//! The crate covers Matérn kernels and their Gram matrices ([`kernel`]),
//! native-space interpolation ([`native`]), penalized least-squares
//! calibration ([`regress`]), posterior sampling for the cheap-code model
//! ([`bayes`]), and convergence-rate experiments ([`experiments`]).

pub mod error;
pub mod special;
pub mod linalg;
pub mod par;
pub mod design;
pub mod kernel;
pub mod model;
pub mod native;
pub mod regress;
pub mod bayes;
pub mod experiments;
pub mod cli;
pub mod selftest;

pub use design::{Design, Domain, PointSet};
pub use error::{Error, Result};
pub use kernel::{MaternKernel, DEFAULT_JITTER};
pub use model::{FnModel, Model, ModelError, SharedModel};
