//! Lasso, the Gauss-Lasso selector, and the population-level diagnostics that
//! decide when each recovers the support of a sparse linear model.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditions;
pub mod data_pipeline;
pub mod designs;
pub mod error;
pub mod experiments;
pub mod gauss_lasso;
pub mod lasso;
pub mod linalg;
pub mod model;
pub mod population;

pub use error::{Error, Result};
pub use model::{CovKind, CovarianceModel, PenaltyState, RegressionInstance, SignedSupport, Truth};
