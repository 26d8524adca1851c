//! Policy evaluation on fresh paths.
//!
//! A trained hierarchy induces a greedy policy: at each epoch take the
//! admissible action maximising immediate cash flow plus the regression
//! continuation of the resulting control. Rolling that policy over an
//! independent path set and averaging the collected cash flows gives a
//! lower bound on the true value, since any feasible policy does.
//!
//! Paths are processed in fixed-size blocks. Within a block the epoch's
//! feature matrix is built once and continuation chains are materialised
//! vectorised; block results are combined in block order, so the estimate
//! does not depend on the number of worker threads and agrees bit for bit
//! with a per-state rollout through [`Evaluator`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::ControlProblem;
use crate::cost::CostCounters;
use crate::error::{Error, Result};
use crate::model::PathSet;
use crate::regression::truncate;
use crate::scalar::{real, Scalar};
use crate::solver::{BlockEval, Evaluator, ValueHierarchy};

/// Paths handled per rollout block.
pub const ROLLOUT_BLOCK: usize = 8192;

/// Width multiplier of the reported confidence band (three standard
/// errors, roughly 99.7% coverage).
const BAND_SIGMAS: f64 = 3.0;

/// Monte Carlo lower bound for one policy rollout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LowerBoundReport<T> {
    /// Mean collected discounted cash flow over the test paths.
    pub estimate: T,
    /// Three standard errors of the mean.
    pub half_width: T,
    /// Number of test paths.
    pub num_paths: usize,
    /// Hierarchy level whose continuations drove the policy.
    pub level: usize,
    /// Work done during the rollout.
    pub counters: CostCounters,
}

impl<T: Scalar, P: ControlProblem<T> + ?Sized> Evaluator<'_, T, P> {
    /// Greedy action at `(epoch, y, x)` under the level-`level`
    /// continuations: maximises `H + c(phi(a, y))`, ties keep the first
    /// admissible action in action order. At the terminal epoch the
    /// continuation is zero, so this maximises the cash flow alone.
    pub fn greedy_action(
        &mut self,
        level: usize,
        epoch: usize,
        y: usize,
        x: &[T],
    ) -> Result<usize> {
        let problem = self.problem();
        let admissible = problem.admissible(epoch, y, x);
        if admissible.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no admissible action at epoch {epoch}, control {y}"
            )));
        }
        let trunc = self.hierarchy().truncation();
        let mut best = T::neg_infinity();
        let mut best_action = 0usize;
        for a in admissible.iter() {
            let next = problem.transition(epoch, a, y);
            let mut c = self.continuation(level, epoch, next, x)?;
            if let Some(w) = trunc {
                c = truncate(c, w);
            }
            let v = self.problem().cash_flow(epoch, a, y, x) + c;
            if v > best {
                best = v;
                best_action = a;
            }
        }
        Ok(best_action)
    }
}

/// Regression readout of the trained value at epoch zero, for the
/// problem's initial control.
pub fn value_readout<T, P>(
    problem: &P,
    hierarchy: &ValueHierarchy<T>,
    level: usize,
    x0: &[T],
) -> Result<T>
where
    T: Scalar,
    P: ControlProblem<T>,
{
    let mut evaluator = Evaluator::new(problem, hierarchy)?;
    evaluator.value(level, 0, problem.initial_control(), x0)
}

struct BlockOutcome<T> {
    sum: T,
    sum_sq: T,
    counters: CostCounters,
}

/// Rolls the level-`level` greedy policy over `test` and reports the mean
/// collected cash flow with a three-standard-error band.
///
/// The test set must be independent of training: sharing the training seed
/// is rejected outright.
pub fn lower_bound<T, P>(
    problem: &P,
    hierarchy: &ValueHierarchy<T>,
    test: &PathSet<T>,
    level: usize,
) -> Result<LowerBoundReport<T>>
where
    T: Scalar,
    P: ControlProblem<T>,
{
    if problem.id() != hierarchy.problem_id() {
        return Err(Error::InvalidInput(format!(
            "hierarchy was trained for `{}`, not `{}`",
            hierarchy.problem_id(),
            problem.id()
        )));
    }
    if test.horizon() != hierarchy.horizon() {
        return Err(Error::InvalidInput(format!(
            "test horizon {} does not match trained horizon {}",
            test.horizon(),
            hierarchy.horizon()
        )));
    }
    if test.dim() != problem.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.state_dim(),
            found: test.dim(),
        });
    }
    if level > hierarchy.depth() {
        return Err(Error::InvalidInput(format!(
            "level {level} exceeds trained depth {}",
            hierarchy.depth()
        )));
    }
    if test.seed() == hierarchy.train_seed() {
        return Err(Error::SeedCollision(test.seed()));
    }
    let num_paths = test.num_paths();
    if num_paths == 0 {
        return Err(Error::InvalidInput("empty test path set".into()));
    }

    let block_starts: Vec<usize> = (0..num_paths).step_by(ROLLOUT_BLOCK).collect();
    let outcomes: Vec<BlockOutcome<T>> = block_starts
        .par_iter()
        .map(|&start| {
            let end = (start + ROLLOUT_BLOCK).min(num_paths);
            rollout_block(problem, hierarchy, test, level, start..end)
        })
        .collect::<Result<_>>()?;

    // Combine per-block sums in block order: the result is independent of
    // the parallel schedule.
    let mut sum = T::zero();
    let mut sum_sq = T::zero();
    let mut counters = CostCounters::new();
    for outcome in outcomes {
        sum += outcome.sum;
        sum_sq += outcome.sum_sq;
        counters.merge(&outcome.counters);
    }
    let n = real::<T>(num_paths as f64);
    let estimate = sum / n;
    let half_width = if num_paths > 1 {
        let var = (sum_sq - sum * sum / n) / (n - T::one());
        let std = var.max(T::zero()).sqrt();
        real::<T>(BAND_SIGMAS) * std / n.sqrt()
    } else {
        T::zero()
    };
    Ok(LowerBoundReport {
        estimate,
        half_width,
        num_paths,
        level,
        counters,
    })
}

fn rollout_block<T, P>(
    problem: &P,
    hierarchy: &ValueHierarchy<T>,
    test: &PathSet<T>,
    level: usize,
    range: std::ops::Range<usize>,
) -> Result<BlockOutcome<T>>
where
    T: Scalar,
    P: ControlProblem<T>,
{
    let horizon = hierarchy.horizon();
    let dim = problem.state_dim();
    let block_len = range.len();
    let mut counters = CostCounters::new();
    let mut controls = vec![problem.initial_control(); block_len];
    let mut collected = vec![T::zero(); block_len];
    let mut states = Vec::new();
    let view = hierarchy.cells_view();
    let trunc = hierarchy.truncation();

    for j in 0..horizon {
        test.gather_epoch(j, range.clone(), &mut states);
        let mut block = BlockEval::new(
            problem,
            hierarchy.basis(),
            &states,
            hierarchy.reinforce_sets(),
            trunc,
            &mut counters,
        )?;
        let cont = block.continuation_vectors(view, level, j, &mut counters)?;
        for m in 0..block_len {
            let x = &states[m * dim..(m + 1) * dim];
            let y = controls[m];
            let mut best = T::neg_infinity();
            let mut best_action = None;
            for a in problem.admissible(j, y, x).iter() {
                let next = problem.transition(j, a, y);
                let mut c = cont[next][m];
                if let Some(w) = trunc {
                    c = truncate(c, w);
                }
                let v = problem.cash_flow(j, a, y, x) + c;
                if v > best {
                    best = v;
                    best_action = Some((a, next));
                }
            }
            let (a, next) = best_action.ok_or_else(|| {
                Error::InvalidInput(format!("no admissible action at epoch {j}, control {y}"))
            })?;
            collected[m] += problem.cash_flow(j, a, y, x);
            controls[m] = next;
        }
    }

    // Terminal epoch: collect the best remaining cash flow.
    test.gather_epoch(horizon, range, &mut states);
    for m in 0..block_len {
        let x = &states[m * dim..(m + 1) * dim];
        collected[m] += problem.terminal_value(controls[m], x);
    }

    let mut sum = T::zero();
    let mut sum_sq = T::zero();
    for &p in &collected {
        sum += p;
        sum_sq += p * p;
    }
    Ok(BlockOutcome {
        sum,
        sum_sq,
        counters,
    })
}
