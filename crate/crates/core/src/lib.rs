//! Global controllability of affine control systems `ẋ = f + Σ uⁱ gᵢ`,
//! with a Monte-Carlo reachability oracle for cross-checking verdicts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convex;
pub mod criterion;
pub mod error;
pub mod expr;
pub mod field;
pub mod lie;
pub mod metrics;
pub mod ode;
pub mod par;
pub mod reach;
pub mod report;
pub mod system;
pub mod transport;

pub use error::{Error, Result};
