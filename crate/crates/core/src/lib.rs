//! Decides whether a fourth-order ODE is linearizable by a point
//! transformation, constructs the linearizing transformation and the
//! Laguerre-form linear target when it is, and verifies the result
//! numerically.
//!
//! The crate is organized around the pipeline
//! classify → condition test → construct → verify:
//!
//! - [`expr`]: the expression language (parsing, printing, exact symbolic
//!   differentiation, jet evaluation);
//! - [`jet`]: truncated-Taylor arithmetic backing all numeric derivatives;
//! - [`candidates`]: the two structural normal forms, coefficient extraction
//!   and the forward coefficient oracles;
//! - [`lintest`]: the linearization conditions and the randomized zero test;
//! - [`construct`]: building the transformation and the target equation;
//! - [`verify`]: chain-rule pushforward, round-trip residuals and the
//!   dual-path coefficient oracle;
//! - [`pipeline`]: JSON request/report plumbing shared by the CLI and the
//!   Python bindings.

pub mod candidates;
pub mod construct;
pub mod expr;
pub mod fixtures;
pub mod jet;
pub mod lintest;
pub mod number;
pub mod pipeline;
pub mod rk;
pub mod sample;
pub mod verify;

pub use expr::{diff, parse_expr, parse_rhs, Ex, Expr, Func, Var};
pub use number::Number;
