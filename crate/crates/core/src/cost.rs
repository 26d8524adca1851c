//! Work counters for cost-model verification.
//!
//! Counters track logical operations, not flops: states drawn by the
//! simulator, basis-function evaluations, value-function evaluations
//! performed to feed reinforcement columns, and least-squares solves with
//! their accumulated row and column counts. Counting is always on; it adds
//! one increment per vectorised operation, nothing per path element.

use serde::{Deserialize, Serialize};

/// Operation tallies for one training or evaluation run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounters {
    /// States drawn by path simulation (`paths * instants`).
    pub sim_states: u64,
    /// Individual basis-function evaluations.
    pub basis_evals: u64,
    /// Value-function evaluations performed while materialising
    /// reinforcement chains (one per control per state per chain cell).
    pub reinforcement_evals: u64,
    /// Number of least-squares solves.
    pub lsq_solves: u64,
    /// Total rows across all solves.
    pub lsq_rows: u64,
    /// Total columns across all solves.
    pub lsq_cols: u64,
}

impl CostCounters {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a simulation of `paths` paths with `instants` states each.
    pub fn record_simulation(&mut self, paths: usize, instants: usize) {
        self.sim_states += (paths * instants) as u64;
    }

    /// Records evaluation of `features` basis functions at `states` states.
    pub fn record_basis(&mut self, states: usize, features: usize) {
        self.basis_evals += (states * features) as u64;
    }

    /// Records a reinforcement-chain cell evaluated at `states` states for
    /// `controls` controls.
    pub fn record_reinforcement(&mut self, states: usize, controls: usize) {
        self.reinforcement_evals += (states * controls) as u64;
    }

    /// Records one least-squares solve of the given shape.
    pub fn record_solve(&mut self, rows: usize, cols: usize) {
        self.lsq_solves += 1;
        self.lsq_rows += rows as u64;
        self.lsq_cols += cols as u64;
    }

    /// Adds another counter set into this one.
    pub fn merge(&mut self, other: &CostCounters) {
        self.sim_states += other.sim_states;
        self.basis_evals += other.basis_evals;
        self.reinforcement_evals += other.reinforcement_evals;
        self.lsq_solves += other.lsq_solves;
        self.lsq_rows += other.lsq_rows;
        self.lsq_cols += other.lsq_cols;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tallies_accumulate() {
        let mut c = CostCounters::new();
        c.record_simulation(10, 5);
        c.record_basis(10, 3);
        c.record_reinforcement(10, 2);
        c.record_solve(10, 4);
        c.record_solve(10, 6);
        assert_eq!(c.sim_states, 50);
        assert_eq!(c.basis_evals, 30);
        assert_eq!(c.reinforcement_evals, 20);
        assert_eq!(c.lsq_solves, 2);
        assert_eq!(c.lsq_rows, 20);
        assert_eq!(c.lsq_cols, 10);

        let mut d = CostCounters::new();
        d.merge(&c);
        d.merge(&c);
        assert_eq!(d.lsq_solves, 4);
        assert_eq!(d.sim_states, 100);
    }
}
