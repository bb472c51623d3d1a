//! Symbolic regression for recovering asymptotic expansions from sampled data.
#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod expr;
pub mod gp;
pub mod numerics;
pub mod problems;
pub mod series;

pub use expr::{ExprError, ExprTree, Node, NodeId, Op};
pub use gp::{evolve, multi_run, GpConfig, GpError, Individual, MultiRun, RunResult, StopReason};
pub use problems::{Dataset, Feature, ProblemError};
pub use series::{Series, SeriesError, Term};
