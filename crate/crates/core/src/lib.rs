//! Sampling diverse feasible solutions of factored nonlinear feasibility
//! problems.
//!
//! A problem is a [`graph::ConstraintGraph`]. Full samples are produced by
//! a sequence of conditional sampling operations ([`solve`]), each assigning
//! a block of variables given the ones already fixed. The lattice of
//! partial assignments and its pruned transitions live in [`states`];
//! [`mcts`] learns which sequence of operations yields the most samples per
//! unit of compute, and [`runtime`] drives the whole loop under a budget.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod graph;
pub mod mcts;
pub mod metrics;
pub mod pose;
pub mod runtime;
pub mod scenarios;
pub mod solve;
pub mod states;
pub mod varset;

pub use graph::{parse_graph, serialize_graph, Assignment, ConstraintGraph, GraphError};
pub use varset::VarSet;
