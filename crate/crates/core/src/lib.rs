//! Adaptive regularization for convexly constrained, partially separable
//! problems with non-Lipschitz `|U_i x|^q` terms.
//!
//! The objective is
//! `f(x) = sum_{i in N} f_i(U_i x) + sum_{i in H} |U_i x|^q`, `q in (0, 1)`,
//! minimized over a closed convex set. Each outer iteration builds
//! regularized high-order Taylor models of the smooth elements, a dedicated
//! model of each singular element, and adapts one regularization weight per
//! element. See the `examples/` directory for end-to-end usage.

// `!(a > b)` is used on purpose so that NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activity;
pub mod criticality;
pub mod descriptor;
pub mod driver;
pub mod element;
pub mod error;
pub mod feasible;
pub mod harness;
pub mod ledger;
pub mod linalg;
pub mod models;
pub mod problem;
pub mod subsolver;
pub mod tensor;

pub use driver::{solve, solve_from, SolveReport, SolverConfig};
pub use error::{PsarpError, Result};
pub use feasible::FeasibleSet;
pub use models::HModel;
pub use problem::{ElementMap, NiceElement, Problem};
