//! Simulation and estimation toolkit for structural equation models over
//! unit networks: network generators, a node-formula DSL with friend
//! indexing, counterfactual actions, Monte Carlo targets and estimators.

pub mod causaltarget;
pub mod error;
pub mod estimators;
pub mod exprlang;
pub mod netgraph;
pub mod scenario;
pub mod semodel;
pub mod simengine;

pub use error::{Error, Result};
