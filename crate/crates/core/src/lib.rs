//! Least-squares Monte Carlo for discrete-time stochastic optimal control
//! with finite action and control sets.
//!
//! The crate prices early-exercise and storage problems by backward
//! regression on simulated paths. Besides the standard value-regression
//! scheme it implements reinforced regression hierarchies: at level `i` the
//! regression basis is augmented with level `i - 1` value functions
//! evaluated at the current state, which feeds dynamic-programming
//! structure back into the function class. Policies induced by the trained
//! continuation values are evaluated on fresh paths to produce unbiased
//! lower bounds with Monte Carlo error bars.
//!
//! Everything is generic over the scalar type via [`scalar::Scalar`];
//! `f64` is the default choice and `f32` is supported throughout.

pub mod basis;
pub mod control;
pub mod cost;
pub mod error;
pub mod evaluate;
pub mod mat;
pub mod model;
pub mod regression;
pub mod scalar;
pub mod solver;

pub use basis::{build_basis, design_matrix, sorted_features, BasisFamily, BasisSpec};
pub use control::{ControlProblem, GasStorageProblem, MaxCall, Payoff, StoppingProblem};
pub use cost::CostCounters;
pub use error::{Error, Result};
pub use evaluate::{lower_bound, value_readout, LowerBoundReport, ROLLOUT_BLOCK};
pub use model::{
    read_paths_binary, simulate_gbm, simulate_oil_gas, simulate_oil_gas_subsampled, subsample,
    write_paths_binary, write_paths_csv, GbmParams, OilGasParams, PathSet,
};
pub use regression::{
    fit_least_squares, fit_least_squares_multi, truncate, LsqFit, LsqOptions, QrFactors,
};
pub use scalar::Scalar;
pub use solver::{
    load_hierarchy, save_hierarchy, solve_hrr_a, solve_hrr_b, solve_rr_diagonal, solve_standard,
    Algorithm, CellCoeffs, Evaluator, SolverOptions, Termination, ValueHierarchy,
};

/// Double-precision aliases for the main library types.
pub type PathSet64 = model::PathSet<f64>;
pub type BasisFamily64 = basis::BasisFamily<f64>;
pub type GasStorageProblem64 = control::GasStorageProblem<f64>;
pub type ValueHierarchy64 = solver::ValueHierarchy<f64>;

/// Single-precision aliases for memory-bound simulation work.
pub type PathSet32 = model::PathSet<f32>;
pub type BasisFamily32 = basis::BasisFamily<f32>;
pub type ValueHierarchy32 = solver::ValueHierarchy<f32>;
