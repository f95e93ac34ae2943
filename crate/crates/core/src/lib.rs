//! Sparse regularization with coefficient-wise nonconvex penalties
//! `sum_k phi_k(|x_k|)`, solved by monotone reweighted least squares or
//! reweighted l1 minimization.

// `!(x > 0.0)` rejects NaN along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod duality;
pub mod error;
pub mod metrics_report;
pub mod operators;
pub mod penalties;
pub mod problems;
pub mod solver_irl1;
pub mod solver_irls2;

pub use duality::CIFunction;
pub use error::{Error, Result};
pub use metrics_report::{RunRecord, SparsityMetrics};
pub use operators::{LinearOperator, NormalSystem, SparseMatrix};
pub use penalties::{PenaltyFamily, PenaltySequence, PenaltySpec, SmoothedPenalty};
pub use problems::{HeatControlProblem, HeatSettings, MMatrixProblem};
pub use solver_irl1::{Irl1Config, Irl1Report};
pub use solver_irls2::{AlphaStart, ContinuationReport, Irls2Config, Irls2Report, Variant};
