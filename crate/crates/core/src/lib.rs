//! Running-consensus distributed detection over deterministically
//! time-varying networks with spatially correlated Gaussian observations.

// `!(x > y)` is used on purpose so that NaN fails domain checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detector;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod ldp;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod scenario;
pub mod schedule;

pub use error::{Error, Result};
pub use model::Hypothesis;
pub use scalar::Scalar;

/// Concrete double-precision aliases.
pub type Model = model::GaussianHypothesisPair<f64>;
pub type Schedule = schedule::WeightSchedule<f64>;
pub type Mat = linalg::Matrix<f64>;
