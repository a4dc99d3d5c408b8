//! Bayesian optimization over mixed feature spaces with a Gaussian process
//! whose kernel is induced by a gradient-boosted tree ensemble.
//!
//! The surrogate's covariance between two points is the fraction of trees
//! that route both points to the same leaf, scaled by a trainable signal
//! variance. Because that kernel is piecewise constant on the partition the
//! ensemble induces, the UCB acquisition function can be maximized to
//! ε-global optimality by branch and bound over the partition instead of by
//! gradient methods — including under polynomial input constraints and
//! integer/categorical dimensions.
//!
//! Module map, in dependency order:
//!
//! * [`space`] — feature spaces, points, boxes, polynomial constraints and
//!   their interval-arithmetic enclosures.
//! * [`gbdt`] — from-scratch gradient-boosted regression trees plus the
//!   structural views the kernel and solver need (leaf assignment, split
//!   index, leaf boxes).
//! * [`tkgp`] — the tree-ensemble kernel, Gram matrix, marginal-likelihood
//!   hyperparameter fitting, and exact GP posterior.
//! * [`acq`] — the UCB acquisition problem in leaf-binary form and its exact
//!   evaluation on partition cells; tree-agreement-capped variant.
//! * [`solver`] — best-first branch and bound over the partition with a
//!   valid decomposed bound, plus an exhaustive-enumeration oracle.
//! * [`propose`] — box midpoint proposal and augmented-Lagrangian
//!   feasibility projection.
//! * [`bench`] — benchmark registry (synthetic suites and constrained
//!   engineering problems) and the tree-agreement uncertainty study.
//! * [`runner`] — the optimization loop, baselines, configs, CSV history,
//!   and aggregation.

pub mod acq;
pub mod bench;
pub mod error;
pub mod gbdt;
pub mod propose;
pub mod runner;
pub mod solver;
pub mod space;
pub mod tkgp;

pub use error::{Error, Result};
