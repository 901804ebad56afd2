//! Certified max-margin training of pairwise conditional random fields.
//!
//! One-slack cutting-plane structural SVM training with a ladder of
//! separation oracles (cached labelings, move-making, branch-and-bound over
//! an LP relaxation), a dynamic cache schedule, and lower/upper bounds on the
//! training objective that certify the result.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod graph;
pub mod inference;

pub use error::{Error, Result};
pub mod dataset;
pub mod qp;
pub mod trainer;
pub mod harness;

pub use dataset::{Dataset, Sample};
