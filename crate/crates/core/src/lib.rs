//! Numerical laboratory for the second-order mean field games system with
//! an overdetermined initial condition: discretization, Carleman-weighted
//! estimates, a forward-backward solver and stability experiments.
//!
//! Everything is generic over the scalar type; the aliases below fix it to
//! `f64`.

// `!(x > 0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod carleman;
pub mod error;
pub mod forward_solver;
pub mod grid;
pub mod mfg_model;
pub mod report;
pub mod scalar;
pub mod stability_lab;

pub use error::{Error, Result};
pub use scalar::{Real, SignedLog};

pub type Grid = grid::SpaceTimeGrid<f64>;
pub type Field = grid::ScalarField<f64>;
pub type Slice = grid::SpatialSlice<f64>;
pub type Params = carleman::CarlemanParams<f64>;
pub type Terms = carleman::EstimateTerms<f64>;
pub type Problem = mfg_model::MfgProblem<f64>;
pub type Config = forward_solver::SolverConfig<f64>;
pub type Solution = forward_solver::MfgSolution<f64>;
