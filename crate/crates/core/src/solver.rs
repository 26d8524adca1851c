//! Backward training of regression value hierarchies.
//!
//! All schemes regress next-epoch value functions on features of the
//! current state, one regression per next-epoch control, and apply the
//! Bellman update `v_j(y, x) = max_a H_j(a, y, x) + c_j(phi(a, y), x)`.
//! They differ in the function class:
//!
//! * `standard`: the plain basis, one backward pass (Tsitsiklis-van Roy
//!   style value regression).
//! * `hrr_a`: an outer loop over levels; level `i` appends the level
//!   `i - 1` value functions (evaluated at the current state, at the
//!   controls in the reinforcement set) to the basis and re-runs the
//!   backward pass against its own targets.
//! * `hrr_b`: one backward pass; at epoch `j` every level `0..=I` is
//!   regressed against the same deepest-level targets, and only cells with
//!   `level + epoch >= I` are solved since shallower ones can never feed
//!   the level-`I` value at epoch zero.
//! * `rr_diagonal`: `hrr_b` at `I = J`, which leaves one cell per epoch
//!   and reproduces the direct reinforced-regression recursion.
//!
//! Because a level-`i` value function references level `i - 1` functions
//! one epoch later, evaluating it unwinds a chain of at most
//! `min(i, J - j)` cells; past the chain's bottom the levels coincide
//! (`v^(i)_j = v^(J-j)_j` for `i >= J - j`), which the storage exploits by
//! resolving every lookup to the effective level `min(i, J - j)`.
//!
//! Vectorised and per-state evaluation accumulate coefficient sums in the
//! same order (basis columns ascending, then reinforcement columns), so
//! training targets, stored-file reloads and policy rollouts reproduce
//! each other bit for bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, design_matrix, BasisFamily, BasisSpec};
use crate::control::ControlProblem;
use crate::cost::CostCounters;
use crate::error::{Error, Result};
use crate::mat::ColMatrix;
use crate::model::PathSet;
use crate::regression::{truncate, LsqOptions, QrFactors};
use crate::scalar::{real, Scalar};

/// Training scheme identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Standard,
    HrrA,
    HrrB,
    RrDiagonal,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Standard => "standard",
            Algorithm::HrrA => "hrr_a",
            Algorithm::HrrB => "hrr_b",
            Algorithm::RrDiagonal => "rr_diagonal",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Algorithm::Standard),
            "hrr_a" => Ok(Algorithm::HrrA),
            "hrr_b" => Ok(Algorithm::HrrB),
            "rr_diagonal" => Ok(Algorithm::RrDiagonal),
            other => Err(Error::InvalidInput(format!("unknown algorithm `{other}`"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Stopping rule for the level loop of `hrr_a`.
#[derive(Debug, Clone, Copy)]
pub enum Termination<T> {
    /// Run exactly this many levels.
    Depth(usize),
    /// Stop when the mean relative change of cell residuals between
    /// consecutive levels falls below `theta`, or at `max_depth`.
    Adaptive { theta: T, max_depth: usize },
}

/// Default adaptive tolerance on the relative residual change.
pub const DEFAULT_THETA: f64 = 1e-3;

/// Knobs shared by all training schemes.
#[derive(Debug, Clone)]
pub struct SolverOptions<T> {
    /// Ridge penalty for the regressions; zero disables it.
    pub ridge: T,
    /// Rescale design columns to unit norm before factoring.
    pub standardize: bool,
    /// Clamp regression-predicted continuation values to the band
    /// `[-W, W]` with `W = J * C_H`; requires the problem to declare a
    /// cash-flow bound. Off by default.
    pub truncate: bool,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            ridge: T::zero(),
            standardize: false,
            truncate: false,
        }
    }
}

/// Coefficients of one regression cell `(level, epoch, control)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCoeffs<T> {
    /// Basis coefficients first, then one weight per reinforcement column.
    pub values: Vec<T>,
    /// Residual sum of squares of the fit.
    pub rss: T,
    /// Numerical rank of the design.
    pub rank: usize,
}

/// A trained hierarchy of continuation-value regressions.
pub struct ValueHierarchy<T> {
    algorithm: Algorithm,
    depth: usize,
    horizon: usize,
    num_controls: usize,
    basis: BasisFamily<T>,
    reinforce: Vec<Vec<usize>>,
    cells: Vec<Option<CellCoeffs<T>>>,
    truncation: Option<T>,
    train_seed: u64,
    problem_id: String,
    counters: CostCounters,
}

impl<T: Scalar> ValueHierarchy<T> {
    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    /// Deepest trained level `I`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_controls(&self) -> usize {
        self.num_controls
    }

    pub fn basis(&self) -> &BasisFamily<T> {
        &self.basis
    }

    /// Reinforcement sets `L^y`, one per control.
    pub fn reinforce_sets(&self) -> &[Vec<usize>] {
        &self.reinforce
    }

    /// Truncation band `W` when truncation was enabled during training.
    pub fn truncation(&self) -> Option<T> {
        self.truncation
    }

    pub fn train_seed(&self) -> u64 {
        self.train_seed
    }

    pub fn problem_id(&self) -> &str {
        &self.problem_id
    }

    /// Counters accumulated during training.
    pub fn counters(&self) -> &CostCounters {
        &self.counters
    }

    /// Effective storage level for a queried `(level, epoch)`: levels at
    /// and beyond `J - j` coincide, so lookups resolve to the shallower
    /// stored cell.
    pub fn effective_level(&self, level: usize, epoch: usize) -> usize {
        level.min(self.horizon - epoch.min(self.horizon))
    }

    /// True when the cell that `(level, epoch)` resolves to was never
    /// solved (outside the needed set of `hrr_b`).
    pub fn is_skipped(&self, level: usize, epoch: usize) -> bool {
        if epoch >= self.horizon || level > self.depth {
            return false;
        }
        let le = self.effective_level(level, epoch);
        self.cells[cell_index(le, epoch, 0, self.horizon, self.num_controls)].is_none()
    }

    /// Coefficients backing `(level, epoch, control)`, after effective-level
    /// resolution. Errors on skipped cells.
    pub fn coefficients(&self, level: usize, epoch: usize, y: usize) -> Result<&CellCoeffs<T>> {
        if level > self.depth {
            return Err(Error::InvalidInput(format!(
                "level {level} exceeds trained depth {}",
                self.depth
            )));
        }
        if epoch >= self.horizon {
            return Err(Error::InvalidInput(format!(
                "no regression cells at epoch {epoch}"
            )));
        }
        if y >= self.num_controls {
            return Err(Error::InvalidInput(format!("control {y} out of range")));
        }
        let le = self.effective_level(level, epoch);
        self.cells[cell_index(le, epoch, y, self.horizon, self.num_controls)]
            .as_ref()
            .ok_or(Error::SkippedCell { level: le, epoch })
    }

    pub(crate) fn cells_view(&self) -> CellsView<'_, T> {
        CellsView {
            horizon: self.horizon,
            num_controls: self.num_controls,
            cells: &self.cells,
        }
    }
}

#[inline]
fn cell_index(level: usize, epoch: usize, y: usize, horizon: usize, num_controls: usize) -> usize {
    (level * horizon + epoch) * num_controls + y
}

/// Borrowed cell storage shared by training (partially filled) and
/// evaluation (complete).
#[derive(Clone, Copy)]
pub(crate) struct CellsView<'a, T> {
    pub(crate) horizon: usize,
    pub(crate) num_controls: usize,
    cells: &'a [Option<CellCoeffs<T>>],
}

impl<'a, T: Scalar> CellsView<'a, T> {
    fn get(&self, level: usize, epoch: usize, y: usize) -> Result<&'a CellCoeffs<T>> {
        self.cells[cell_index(level, epoch, y, self.horizon, self.num_controls)]
            .as_ref()
            .ok_or(Error::SkippedCell { level, epoch })
    }
}

// ============================================================================
// Vectorised evaluation over a block of states
// ============================================================================

/// Evaluation context for one block of states: the feature matrix is built
/// once and every chain cell is materialised at most once per block.
pub(crate) struct BlockEval<'a, T, P: ?Sized> {
    pub(crate) problem: &'a P,
    pub(crate) basis_matrix: ColMatrix<T>,
    pub(crate) states: &'a [T],
    pub(crate) rows: usize,
    pub(crate) reinforce: &'a [Vec<usize>],
    pub(crate) truncation: Option<T>,
    memo: BTreeMap<(usize, usize), Vec<Vec<T>>>,
}

impl<'a, T, P> BlockEval<'a, T, P>
where
    T: Scalar,
    P: ControlProblem<T> + ?Sized,
{
    pub(crate) fn new(
        problem: &'a P,
        basis: &BasisFamily<T>,
        states: &'a [T],
        reinforce: &'a [Vec<usize>],
        truncation: Option<T>,
        counters: &mut CostCounters,
    ) -> Result<Self> {
        let dim = problem.state_dim();
        let rows = states.len() / dim;
        let basis_matrix = design_matrix(basis, states, dim, &[])?;
        counters.record_basis(rows, basis.len());
        Ok(Self {
            problem,
            basis_matrix,
            states,
            rows,
            reinforce,
            truncation,
            memo: BTreeMap::new(),
        })
    }

    fn state(&self, m: usize) -> &[T] {
        let d = self.problem.state_dim();
        &self.states[m * d..(m + 1) * d]
    }

    /// Ensures the value vectors of every cell in the chain hanging off
    /// `(level, epoch)` are materialised, charging each new cell to the
    /// reinforcement counter.
    pub(crate) fn materialize_values(
        &mut self,
        cells: CellsView<'_, T>,
        level: usize,
        epoch: usize,
        counters: &mut CostCounters,
    ) -> Result<()> {
        let horizon = cells.horizon;
        let mut chain = Vec::new();
        let mut l = level.min(horizon - epoch.min(horizon));
        let mut e = epoch;
        loop {
            if self.memo.contains_key(&(l, e)) {
                break;
            }
            chain.push((l, e));
            if e == horizon || l == 0 {
                break;
            }
            l -= 1;
            e += 1;
        }
        for &(l, e) in chain.iter().rev() {
            let vectors = if e == horizon {
                self.terminal_vectors()
            } else {
                let cont = self.continuation_vectors_inner(cells, l, e)?;
                self.bellman_vectors(e, &cont)
            };
            counters.record_reinforcement(self.rows, self.problem.num_controls());
            self.memo.insert((l, e), vectors);
        }
        Ok(())
    }

    /// Continuation vectors `c^(level)_epoch(z, .)` for every control `z`,
    /// using already-materialised child values. Does not touch the memo of
    /// `(level, epoch)` itself.
    pub(crate) fn continuation_vectors(
        &mut self,
        cells: CellsView<'_, T>,
        level: usize,
        epoch: usize,
        counters: &mut CostCounters,
    ) -> Result<Vec<Vec<T>>> {
        let le = level.min(cells.horizon - epoch.min(cells.horizon));
        if le >= 1 {
            self.materialize_values(cells, le - 1, epoch + 1, counters)?;
        }
        self.continuation_vectors_inner(cells, le, epoch)
    }

    fn continuation_vectors_inner(
        &self,
        cells: CellsView<'_, T>,
        level: usize,
        epoch: usize,
    ) -> Result<Vec<Vec<T>>> {
        let num_controls = self.problem.num_controls();
        let k = self.basis_matrix.cols();
        let child = if level >= 1 {
            let key = (level - 1, epoch + 1);
            Some(self.memo.get(&key).ok_or(Error::SkippedCell {
                level: level - 1,
                epoch: epoch + 1,
            })?)
        } else {
            None
        };
        (0..num_controls)
            .into_par_iter()
            .map(|z| {
                let cell = cells.get(level, epoch, z)?;
                let sets = &self.reinforce[z];
                let width = if level >= 1 { k + sets.len() } else { k };
                if cell.values.len() != width {
                    return Err(Error::DimensionMismatch {
                        expected: width,
                        found: cell.values.len(),
                    });
                }
                let mut cont = vec![T::zero(); self.rows];
                self.basis_matrix
                    .accumulate_weighted_columns(&cell.values[..k], &mut cont);
                if let Some(child) = child {
                    for (slot, &y_k) in sets.iter().enumerate() {
                        let w = cell.values[k + slot];
                        for (c, &v) in cont.iter_mut().zip(child[y_k].iter()) {
                            *c += w * v;
                        }
                    }
                }
                Ok(cont)
            })
            .collect()
    }

    /// Bellman update at `epoch` given continuation vectors per control.
    pub(crate) fn bellman_vectors(&self, epoch: usize, cont: &[Vec<T>]) -> Vec<Vec<T>> {
        let num_controls = self.problem.num_controls();
        (0..num_controls)
            .into_par_iter()
            .map(|y| {
                (0..self.rows)
                    .map(|m| {
                        let x = self.state(m);
                        let mut best = T::neg_infinity();
                        for a in self.problem.admissible(epoch, y, x).iter() {
                            let next = self.problem.transition(epoch, a, y);
                            let mut c = cont[next][m];
                            if let Some(w) = self.truncation {
                                c = truncate(c, w);
                            }
                            let v = self.problem.cash_flow(epoch, a, y, x) + c;
                            if v > best {
                                best = v;
                            }
                        }
                        best
                    })
                    .collect()
            })
            .collect()
    }

    fn terminal_vectors(&self) -> Vec<Vec<T>> {
        let num_controls = self.problem.num_controls();
        (0..num_controls)
            .into_par_iter()
            .map(|y| {
                (0..self.rows)
                    .map(|m| self.problem.terminal_value(y, self.state(m)))
                    .collect()
            })
            .collect()
    }
}

// ============================================================================
// Training
// ============================================================================

/// Standard value regression: one backward pass on the plain basis.
pub fn solve_standard<T, P>(
    problem: &P,
    train: &PathSet<T>,
    basis: &BasisFamily<T>,
    options: &SolverOptions<T>,
) -> Result<ValueHierarchy<T>>
where
    T: Scalar,
    P: ControlProblem<T>,
{
    let reinforce = problem.default_reinforce();
    train_hrr_b(
        problem,
        train,
        basis,
        &reinforce,
        0,
        options,
        Algorithm::Standard,
    )
}

/// Reinforced hierarchy, scheme B: one backward pass, all levels share the
/// deepest-level targets, cells with `level + epoch < depth` are skipped.
pub fn solve_hrr_b<T, P>(
    problem: &P,
    train: &PathSet<T>,
    basis: &BasisFamily<T>,
    reinforce: &[Vec<usize>],
    depth: usize,
    options: &SolverOptions<T>,
) -> Result<ValueHierarchy<T>>
where
    T: Scalar,
    P: ControlProblem<T>,
{
    train_hrr_b(
        problem,
        train,
        basis,
        reinforce,
        depth,
        options,
        Algorithm::HrrB,
    )
}

/// Direct reinforced-regression recursion: scheme B at full depth `I = J`,
/// leaving a single cell per epoch.
pub fn solve_rr_diagonal<T, P>(
    problem: &P,
    train: &PathSet<T>,
    basis: &BasisFamily<T>,
    reinforce: &[Vec<usize>],
    options: &SolverOptions<T>,
) -> Result<ValueHierarchy<T>>
where
    T: Scalar,
    P: ControlProblem<T>,
{
    train_hrr_b(
        problem,
        train,
        basis,
        reinforce,
        train.horizon(),
        options,
        Algorithm::RrDiagonal,
    )
}

struct TrainSetup<T> {
    horizon: usize,
    num_controls: usize,
    num_paths: usize,
    truncation: Option<T>,
    lsq: LsqOptions<T>,
}

fn validate_training<T, P>(
    problem: &P,
    train: &PathSet<T>,
    basis: &BasisFamily<T>,
    reinforce: &[Vec<usize>],
    depth: usize,
    options: &SolverOptions<T>,
) -> Result<TrainSetup<T>>
where
    T: Scalar,
    P: ControlProblem<T>,
{
    let horizon = train.horizon();
    if horizon == 0 {
        return Err(Error::InvalidInput(
            "need at least one decision epoch".into(),
        ));
    }
    if horizon != problem.horizon() {
        return Err(Error::InvalidInput(format!(
            "path horizon {horizon} does not match problem horizon {}",
            problem.horizon()
        )));
    }
    if train.dim() != problem.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.state_dim(),
            found: train.dim(),
        });
    }
    if basis.dim() != problem.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.state_dim(),
            found: basis.dim(),
        });
    }
    if depth > horizon {
        return Err(Error::InvalidInput(format!(
            "depth {depth} exceeds horizon {horizon}; deeper levels coincide with level J - j"
        )));
    }
    let num_controls = problem.num_controls();
    if reinforce.len() != num_controls {
        return Err(Error::DimensionMismatch {
            expected: num_controls,
            found: reinforce.len(),
        });
    }
    for set in reinforce {
        if set.iter().any(|&y| y >= num_controls) {
            return Err(Error::InvalidInput(
                "reinforcement set references a control outside the control set".into(),
            ));
        }
    }
    let truncation = if options.truncate {
        let bound = problem.cash_flow_bound().ok_or_else(|| {
            Error::InvalidInput("truncation requires a cash-flow bound on the problem".into())
        })?;
        Some(real::<T>(horizon as f64) * bound)
    } else {
        None
    };
    Ok(TrainSetup {
        horizon,
        num_controls,
        num_paths: train.num_paths(),
        truncation,
        lsq: LsqOptions {
            ridge: options.ridge,
            standardize: options.standardize,
        },
    })
}

/// Groups controls whose reinforcement sets coincide, in ascending control
/// order, so one QR factorization serves all targets of the group.
fn reinforce_groups(reinforce: &[Vec<usize>]) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (y, set) in reinforce.iter().enumerate() {
        groups.entry(set.clone()).or_default().push(y);
    }
    groups.into_iter().collect()
}

fn train_hrr_b<T, P>(
    problem: &P,
    train: &PathSet<T>,
    basis: &BasisFamily<T>,
    reinforce: &[Vec<usize>],
    depth: usize,
    options: &SolverOptions<T>,
    algorithm: Algorithm,
) -> Result<ValueHierarchy<T>>
where
    T: Scalar,
    P: ControlProblem<T>,
{
    let setup = validate_training(problem, train, basis, reinforce, depth, options)?;
    let (horizon, num_controls, num_paths) = (setup.horizon, setup.num_controls, setup.num_paths);
    let k = basis.len();
    let mut counters = CostCounters::new();
    let mut cells: Vec<Option<CellCoeffs<T>>> = vec![None; (depth + 1) * horizon * num_controls];

    // Targets for the next regression: value vectors at epoch j + 1 on the
    // paths' own states, starting from the terminal rule.
    let mut states = Vec::new();
    train.gather_epoch(horizon, 0..num_paths, &mut states);
    let mut values_next: Vec<Vec<T>> = (0..num_controls)
        .into_par_iter()
        .map(|y| {
            (0..num_paths)
                .map(|m| problem.terminal_value(y, &states[m * train.dim()..(m + 1) * train.dim()]))
                .collect()
        })
        .collect();

    let groups = reinforce_groups(reinforce);

    for j in (0..horizon).rev() {
        train.gather_epoch(j, 0..num_paths, &mut states);
        let mut block = BlockEval::new(
            problem,
            basis,
            &states,
            reinforce,
            setup.truncation,
            &mut counters,
        )?;

        let i_lo = depth.saturating_sub(j);
        let i_hi = depth.min(horizon - j);

        // Materialise the child chains once; levels share cells.
        {
            let view = CellsView {
                horizon,
                num_controls,
                cells: &cells,
            };
            for i in i_lo.max(1)..=i_hi {
                block.materialize_values(view, i - 1, j + 1, &mut counters)?;
            }
        }

        for i in i_lo..=i_hi {
            if i == 0 {
                let factors = QrFactors::new(&block.basis_matrix, &setup.lsq)?;
                for y in 0..num_controls {
                    let fit = factors.solve(&values_next[y])?;
                    counters.record_solve(num_paths, k);
                    cells[cell_index(i, j, y, horizon, num_controls)] = Some(CellCoeffs {
                        values: fit.coefficients,
                        rss: fit.rss,
                        rank: fit.rank,
                    });
                }
            } else {
                for (set, members) in &groups {
                    let mut design = block.basis_matrix.clone();
                    {
                        let child = block.memo.get(&(i - 1, j + 1)).expect("chain materialised");
                        for &y_k in set {
                            design.push_col(&child[y_k]);
                        }
                    }
                    let factors = QrFactors::new(&design, &setup.lsq)?;
                    for &y in members {
                        let fit = factors.solve(&values_next[y])?;
                        counters.record_solve(num_paths, design.cols());
                        cells[cell_index(i, j, y, horizon, num_controls)] = Some(CellCoeffs {
                            values: fit.coefficients,
                            rss: fit.rss,
                            rank: fit.rank,
                        });
                    }
                }
            }
        }

        // New targets: Bellman values of the deepest level at this epoch.
        let view = CellsView {
            horizon,
            num_controls,
            cells: &cells,
        };
        let cont = block.continuation_vectors(view, i_hi, j, &mut counters)?;
        values_next = block.bellman_vectors(j, &cont);
    }

    Ok(ValueHierarchy {
        algorithm,
        depth,
        horizon,
        num_controls,
        basis: basis.clone(),
        reinforce: reinforce.to_vec(),
        cells,
        truncation: setup.truncation,
        train_seed: train.seed(),
        problem_id: problem.id(),
        counters,
    })
}

/// Reinforced hierarchy, scheme A: outer loop over levels, each level runs
/// its own backward pass against its own targets. Supports adaptive
/// termination on the residual change between levels.
pub fn solve_hrr_a<T, P>(
    problem: &P,
    train: &PathSet<T>,
    basis: &BasisFamily<T>,
    reinforce: &[Vec<usize>],
    termination: Termination<T>,
    options: &SolverOptions<T>,
) -> Result<ValueHierarchy<T>>
where
    T: Scalar,
    P: ControlProblem<T>,
{
    let max_depth = match termination {
        Termination::Depth(depth) => depth,
        Termination::Adaptive { theta, max_depth } => {
            if !(theta > T::zero()) {
                return Err(Error::InvalidInput("theta must be positive".into()));
            }
            max_depth.min(train.horizon())
        }
    };
    let setup = validate_training(problem, train, basis, reinforce, max_depth, options)?;
    let (horizon, num_controls, num_paths) = (setup.horizon, setup.num_controls, setup.num_paths);
    let k = basis.len();
    let mut counters = CostCounters::new();
    let mut cells: Vec<Option<CellCoeffs<T>>> =
        vec![None; (max_depth + 1) * horizon * num_controls];

    // Terminal values, shared by every level pass.
    let mut states = Vec::new();
    train.gather_epoch(horizon, 0..num_paths, &mut states);
    let terminal: Vec<Vec<T>> = (0..num_controls)
        .into_par_iter()
        .map(|y| {
            (0..num_paths)
                .map(|m| problem.terminal_value(y, &states[m * train.dim()..(m + 1) * train.dim()]))
                .collect()
        })
        .collect();

    // values[j] holds this level's value vectors at epoch j; epochs in the
    // triangular region j > J - i keep the previous level's vectors, which
    // equal this level's by the level-coincidence identity.
    let mut values: Vec<Vec<Vec<T>>> = vec![Vec::new(); horizon + 1];
    values[horizon] = terminal;

    let groups = reinforce_groups(reinforce);
    let mut achieved = 0usize;

    for i in 0..=max_depth {
        for j in (0..horizon).rev() {
            if i > 0 && j > horizon - i {
                // Triangular region: the cell resolves to a shallower level
                // already trained; values[j] is already correct.
                continue;
            }
            train.gather_epoch(j, 0..num_paths, &mut states);
            let mut block = BlockEval::new(
                problem,
                basis,
                &states,
                reinforce,
                setup.truncation,
                &mut counters,
            )?;
            let view = CellsView {
                horizon,
                num_controls,
                cells: &cells,
            };
            if i == 0 {
                let factors = QrFactors::new(&block.basis_matrix, &setup.lsq)?;
                for y in 0..num_controls {
                    let fit = factors.solve(&values[j + 1][y])?;
                    counters.record_solve(num_paths, k);
                    cells[cell_index(0, j, y, horizon, num_controls)] = Some(CellCoeffs {
                        values: fit.coefficients,
                        rss: fit.rss,
                        rank: fit.rank,
                    });
                }
            } else {
                block.materialize_values(view, i - 1, j + 1, &mut counters)?;
                for (set, members) in &groups {
                    let mut design = block.basis_matrix.clone();
                    {
                        let child = block.memo.get(&(i - 1, j + 1)).expect("materialised");
                        for &y_k in set {
                            design.push_col(&child[y_k]);
                        }
                    }
                    let factors = QrFactors::new(&design, &setup.lsq)?;
                    for &y in members {
                        let fit = factors.solve(&values[j + 1][y])?;
                        counters.record_solve(num_paths, design.cols());
                        cells[cell_index(i, j, y, horizon, num_controls)] = Some(CellCoeffs {
                            values: fit.coefficients,
                            rss: fit.rss,
                            rank: fit.rank,
                        });
                    }
                }
            }
            // Refresh this epoch's value vectors from the cell just solved.
            let view = CellsView {
                horizon,
                num_controls,
                cells: &cells,
            };
            let cont = block.continuation_vectors(view, i, j, &mut counters)?;
            values[j] = block.bellman_vectors(j, &cont);
        }
        achieved = i;

        if let Termination::Adaptive { theta, .. } = termination {
            if i >= 1 {
                let mut total = T::zero();
                let mut count = 0usize;
                for j in 0..horizon.saturating_sub(i - 1) {
                    for y in 0..num_controls {
                        let cur = cells
                            [cell_index(i.min(horizon - j), j, y, horizon, num_controls)]
                        .as_ref();
                        let prev = cells[cell_index(i - 1, j, y, horizon, num_controls)].as_ref();
                        if let (Some(cur), Some(prev)) = (cur, prev) {
                            let denom = prev.rss.max(T::epsilon());
                            total += (cur.rss - prev.rss).abs() / denom;
                            count += 1;
                        }
                    }
                }
                let mean = if count > 0 {
                    total / real::<T>(count as f64)
                } else {
                    T::zero()
                };
                if mean < theta {
                    break;
                }
            }
        }
    }

    // Shrink storage to the achieved depth.
    if achieved < max_depth {
        cells.truncate((achieved + 1) * horizon * num_controls);
    }

    Ok(ValueHierarchy {
        algorithm: Algorithm::HrrA,
        depth: achieved,
        horizon,
        num_controls,
        basis: basis.clone(),
        reinforce: reinforce.to_vec(),
        cells,
        truncation: setup.truncation,
        train_seed: train.seed(),
        problem_id: problem.id(),
        counters,
    })
}

// ============================================================================
// Per-state evaluation
// ============================================================================

/// Evaluates value and continuation functions of a trained hierarchy at
/// individual states. Within one call on a fixed state, each `(level,
/// epoch)` vector of values over the controls is computed at most once.
pub struct Evaluator<'a, T, P: ?Sized> {
    problem: &'a P,
    hierarchy: &'a ValueHierarchy<T>,
    basis_row: Vec<T>,
    sort_scratch: Vec<T>,
    memo: BTreeMap<(usize, usize), Vec<T>>,
    visited: usize,
}

impl<'a, T, P> Evaluator<'a, T, P>
where
    T: Scalar,
    P: ControlProblem<T> + ?Sized,
{
    pub fn new(problem: &'a P, hierarchy: &'a ValueHierarchy<T>) -> Result<Self> {
        if problem.id() != hierarchy.problem_id {
            return Err(Error::InvalidInput(format!(
                "hierarchy was trained for `{}`, not `{}`",
                hierarchy.problem_id,
                problem.id()
            )));
        }
        if problem.state_dim() != hierarchy.basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.state_dim(),
                found: hierarchy.basis.dim(),
            });
        }
        if problem.num_controls() != hierarchy.num_controls
            || problem.horizon() != hierarchy.horizon
        {
            return Err(Error::InvalidInput(
                "problem shape does not match the trained hierarchy".into(),
            ));
        }
        Ok(Self {
            problem,
            hierarchy,
            basis_row: vec![T::zero(); hierarchy.basis.len()],
            sort_scratch: Vec::new(),
            memo: BTreeMap::new(),
            visited: 0,
        })
    }

    /// Cells computed by the last `value`/`continuation` call, terminal
    /// included; the recursion visits at most `min(level, J - epoch) + 1`.
    pub fn visited_cells(&self) -> usize {
        self.visited
    }

    /// The problem this evaluator reads states through.
    pub fn problem(&self) -> &'a P {
        self.problem
    }

    /// The trained hierarchy backing the evaluations.
    pub fn hierarchy(&self) -> &'a ValueHierarchy<T> {
        self.hierarchy
    }

    fn check_args(&self, level: usize, epoch: usize, y: usize, x: &[T]) -> Result<()> {
        if level > self.hierarchy.depth {
            return Err(Error::InvalidInput(format!(
                "level {level} exceeds trained depth {}",
                self.hierarchy.depth
            )));
        }
        if epoch > self.hierarchy.horizon {
            return Err(Error::InvalidInput(format!(
                "epoch {epoch} beyond horizon {}",
                self.hierarchy.horizon
            )));
        }
        if y >= self.hierarchy.num_controls {
            return Err(Error::InvalidInput(format!("control {y} out of range")));
        }
        if x.len() != self.problem.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.problem.state_dim(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("evaluation state"));
        }
        Ok(())
    }

    /// Value `v^(level)_epoch(y, x)`.
    pub fn value(&mut self, level: usize, epoch: usize, y: usize, x: &[T]) -> Result<T> {
        self.check_args(level, epoch, y, x)?;
        self.begin(x);
        self.materialize(level, epoch, x)?;
        let key = (self.effective(level, epoch), epoch);
        Ok(self.memo[&key][y])
    }

    /// Continuation `c^(level)_epoch(y, x)`; zero at the terminal epoch.
    pub fn continuation(&mut self, level: usize, epoch: usize, y: usize, x: &[T]) -> Result<T> {
        self.check_args(level, epoch, y, x)?;
        if epoch == self.hierarchy.horizon {
            return Ok(T::zero());
        }
        self.begin(x);
        let le = self.effective(level, epoch);
        if le >= 1 {
            self.materialize(le - 1, epoch + 1, x)?;
        }
        self.continuation_for(le, epoch, y)
    }

    fn begin(&mut self, x: &[T]) {
        self.memo.clear();
        self.visited = 0;
        self.hierarchy
            .basis
            .eval_row(x, &mut self.sort_scratch, &mut self.basis_row);
    }

    fn effective(&self, level: usize, epoch: usize) -> usize {
        self.hierarchy.effective_level(level, epoch)
    }

    fn materialize(&mut self, level: usize, epoch: usize, x: &[T]) -> Result<()> {
        let horizon = self.hierarchy.horizon;
        let mut chain = Vec::new();
        let mut l = self.effective(level, epoch);
        let mut e = epoch;
        loop {
            if self.memo.contains_key(&(l, e)) {
                break;
            }
            chain.push((l, e));
            if e == horizon || l == 0 {
                break;
            }
            l -= 1;
            e += 1;
        }
        for &(l, e) in chain.iter().rev() {
            let vec = if e == horizon {
                (0..self.hierarchy.num_controls)
                    .map(|y| self.problem.terminal_value(y, x))
                    .collect()
            } else {
                let mut cont = Vec::with_capacity(self.hierarchy.num_controls);
                for z in 0..self.hierarchy.num_controls {
                    cont.push(self.continuation_for(l, e, z)?);
                }
                (0..self.hierarchy.num_controls)
                    .map(|y| {
                        let mut best = T::neg_infinity();
                        for a in self.problem.admissible(e, y, x).iter() {
                            let next = self.problem.transition(e, a, y);
                            let mut c = cont[next];
                            if let Some(w) = self.hierarchy.truncation {
                                c = truncate(c, w);
                            }
                            let v = self.problem.cash_flow(e, a, y, x) + c;
                            if v > best {
                                best = v;
                            }
                        }
                        best
                    })
                    .collect()
            };
            self.visited += 1;
            self.memo.insert((l, e), vec);
        }
        Ok(())
    }

    /// Continuation of the stored cell `(level, epoch, y)`; child values
    /// must already be materialised. Sums basis terms then reinforcement
    /// terms, matching the vectorised accumulation order exactly.
    fn continuation_for(&self, level: usize, epoch: usize, y: usize) -> Result<T> {
        let cell = self.hierarchy.cells_view().get(level, epoch, y)?;
        let k = self.hierarchy.basis.len();
        let sets = &self.hierarchy.reinforce[y];
        let width = if level >= 1 { k + sets.len() } else { k };
        if cell.values.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                found: cell.values.len(),
            });
        }
        let mut acc = T::zero();
        for (&w, &f) in cell.values[..k].iter().zip(self.basis_row.iter()) {
            acc += w * f;
        }
        if level >= 1 {
            let child = &self.memo[&(level - 1, epoch + 1)];
            for (slot, &y_k) in sets.iter().enumerate() {
                acc += cell.values[k + slot] * child[y_k];
            }
        }
        Ok(acc)
    }
}

// ============================================================================
// Persistence
// ============================================================================

const HIERARCHY_FORMAT: &str = "lsmc-hierarchy-v1";

#[derive(Serialize, Deserialize)]
struct CellRecord<T> {
    level: usize,
    epoch: usize,
    control: usize,
    rank: usize,
    rss: T,
    values: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct HierarchyFile<T> {
    format: String,
    algorithm: Algorithm,
    depth: usize,
    horizon: usize,
    num_controls: usize,
    problem_id: String,
    basis: BasisSpec,
    reinforce: Vec<Vec<usize>>,
    truncation: Option<T>,
    train_seed: u64,
    counters: CostCounters,
    cells: Vec<CellRecord<T>>,
}

/// Writes a hierarchy as self-describing JSON. The basis must have been
/// built from a [`BasisSpec`] so it can be reconstructed on load; floats
/// round-trip exactly.
pub fn save_hierarchy<T: Scalar + Serialize>(
    hierarchy: &ValueHierarchy<T>,
    target: &Path,
) -> Result<()> {
    let spec = hierarchy
        .basis
        .spec()
        .ok_or_else(|| Error::Serialization("basis has no serializable description".into()))?;
    let mut records = Vec::new();
    for level in 0..=hierarchy.depth {
        for epoch in 0..hierarchy.horizon {
            for y in 0..hierarchy.num_controls {
                if let Some(cell) = &hierarchy.cells
                    [cell_index(level, epoch, y, hierarchy.horizon, hierarchy.num_controls)]
                {
                    records.push(CellRecord {
                        level,
                        epoch,
                        control: y,
                        rank: cell.rank,
                        rss: cell.rss,
                        values: cell.values.clone(),
                    });
                }
            }
        }
    }
    let file = HierarchyFile {
        format: HIERARCHY_FORMAT.to_string(),
        algorithm: hierarchy.algorithm,
        depth: hierarchy.depth,
        horizon: hierarchy.horizon,
        num_controls: hierarchy.num_controls,
        problem_id: hierarchy.problem_id.clone(),
        basis: spec.clone(),
        reinforce: hierarchy.reinforce.clone(),
        truncation: hierarchy.truncation,
        train_seed: hierarchy.train_seed,
        counters: hierarchy.counters.clone(),
        cells: records,
    };
    let out = File::create(target)?;
    serde_json::to_writer(BufWriter::new(out), &file)
        .map_err(|e| Error::Serialization(e.to_string()))?;
    Ok(())
}

/// Reads a hierarchy written by [`save_hierarchy`].
pub fn load_hierarchy<T: Scalar + DeserializeOwned>(source: &Path) -> Result<ValueHierarchy<T>> {
    let input = File::open(source)?;
    let file: HierarchyFile<T> = serde_json::from_reader(BufReader::new(input))
        .map_err(|e| Error::Serialization(e.to_string()))?;
    if file.format != HIERARCHY_FORMAT {
        return Err(Error::Serialization(format!(
            "unsupported format `{}`",
            file.format
        )));
    }
    let basis = build_basis::<T>(&file.basis)?;
    let mut cells: Vec<Option<CellCoeffs<T>>> =
        vec![None; (file.depth + 1) * file.horizon * file.num_controls];
    for record in file.cells {
        if record.level > file.depth
            || record.epoch >= file.horizon
            || record.control >= file.num_controls
        {
            return Err(Error::Serialization("cell outside hierarchy bounds".into()));
        }
        cells[cell_index(
            record.level,
            record.epoch,
            record.control,
            file.horizon,
            file.num_controls,
        )] = Some(CellCoeffs {
            values: record.values,
            rss: record.rss,
            rank: record.rank,
        });
    }
    Ok(ValueHierarchy {
        algorithm: file.algorithm,
        depth: file.depth,
        horizon: file.horizon,
        num_controls: file.num_controls,
        basis,
        reinforce: file.reinforce,
        cells,
        truncation: file.truncation,
        train_seed: file.train_seed,
        problem_id: file.problem_id,
        counters: file.counters,
    })
}

// ============================================================================
// Tests
// ============================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisSpec;
    use crate::control::{MaxCall, StoppingProblem};
    use crate::model::{simulate_gbm, GbmParams};

    fn gbm(dim: usize, sigma: f64, epochs: usize) -> GbmParams {
        GbmParams {
            dim,
            x0: 100.0,
            rate: 0.05,
            dividend: 0.1,
            sigma,
            maturity: 1.0,
            epochs,
        }
    }

    fn max_call(dim: usize, epochs: usize, rights: usize) -> StoppingProblem<f64, MaxCall<f64>> {
        StoppingProblem::new(dim, epochs, rights, 0.05, 1.0, MaxCall { strike: 100.0 }).unwrap()
    }

    #[test]
    fn standard_solver_counts_and_widths() {
        let problem = max_call(2, 5, 1);
        let train = simulate_gbm::<f64>(&gbm(2, 0.2, 5), 400, 1).unwrap();
        let basis = build_basis(&BasisSpec::Psi1 { dim: 2 }).unwrap();
        let h = solve_standard(&problem, &train, &basis, &SolverOptions::default()).unwrap();
        assert_eq!(h.depth(), 0);
        assert_eq!(h.counters().lsq_solves, 5 * 2);
        assert_eq!(h.counters().reinforcement_evals, 0);
        for j in 0..5 {
            for y in 0..2 {
                let cell = h.coefficients(0, j, y).unwrap();
                assert_eq!(cell.values.len(), basis.len());
            }
        }
        // No rights left: the value function is identically zero, and
        // min-norm regression of zero targets gives zero coefficients.
        let zero = h.coefficients(0, 2, 0).unwrap();
        assert!(zero.values.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn hrr_b_depth_zero_equals_standard() {
        let problem = max_call(2, 4, 1);
        let train = simulate_gbm::<f64>(&gbm(2, 0.2, 4), 300, 3).unwrap();
        let basis = build_basis(&BasisSpec::Psi1 { dim: 2 }).unwrap();
        let reinforce = problem.default_reinforce();
        let std_h = solve_standard(&problem, &train, &basis, &SolverOptions::default()).unwrap();
        let hrr = solve_hrr_b(
            &problem,
            &train,
            &basis,
            &reinforce,
            0,
            &SolverOptions::default(),
        )
        .unwrap();
        for j in 0..4 {
            for y in 0..2 {
                assert_eq!(
                    std_h.coefficients(0, j, y).unwrap().values,
                    hrr.coefficients(0, j, y).unwrap().values
                );
            }
        }
    }

    #[test]
    fn hrr_a_depth_zero_equals_standard() {
        let problem = max_call(2, 4, 1);
        let train = simulate_gbm::<f64>(&gbm(2, 0.2, 4), 300, 3).unwrap();
        let basis = build_basis(&BasisSpec::Psi1 { dim: 2 }).unwrap();
        let reinforce = problem.default_reinforce();
        let std_h = solve_standard(&problem, &train, &basis, &SolverOptions::default()).unwrap();
        let hrr = solve_hrr_a(
            &problem,
            &train,
            &basis,
            &reinforce,
            Termination::Depth(0),
            &SolverOptions::default(),
        )
        .unwrap();
        for j in 0..4 {
            for y in 0..2 {
                assert_eq!(
                    std_h.coefficients(0, j, y).unwrap().values,
                    hrr.coefficients(0, j, y).unwrap().values
                );
            }
        }
    }

    #[test]
    fn skip_rule_matches_needed_set() {
        let problem = max_call(2, 6, 1);
        let train = simulate_gbm::<f64>(&gbm(2, 0.2, 6), 200, 9).unwrap();
        let basis = build_basis(&BasisSpec::Psi1 { dim: 2 }).unwrap();
        let reinforce = problem.default_reinforce();
        let depth = 3usize;
        let h = solve_hrr_b(
            &problem,
            &train,
            &basis,
            &reinforce,
            depth,
            &SolverOptions::default(),
        )
        .unwrap();
        for i in 0..=depth {
            for j in 0..6usize {
                let le = h.effective_level(i, j);
                let needed = le + j >= depth;
                assert_eq!(
                    h.is_skipped(i, j),
                    !needed,
                    "cell ({i}, {j}) effective {le}"
                );
                if needed {
                    assert!(h.coefficients(i, j, 1).is_ok());
                } else {
                    assert!(matches!(
                        h.coefficients(i, j, 1),
                        Err(Error::SkippedCell { .. })
                    ));
                }
            }
        }
    }

    #[test]
    fn deterministic_paths_recover_exact_stopping_value() {
        // Zero volatility: one deterministic path, so the trained rule must
        // reproduce the exact discounted optimum max_j e^(-r t_j) g(x_j).
        // Zero dividend keeps the forward above the strike.
        let problem = max_call(1, 6, 1);
        let params = GbmParams {
            dividend: 0.0,
            ..gbm(1, 0.0, 6)
        };
        let train = simulate_gbm::<f64>(&params, 50, 2).unwrap();
        let basis = build_basis(&BasisSpec::Psi1 { dim: 1 }).unwrap();
        let h = solve_standard(&problem, &train, &basis, &SolverOptions::default()).unwrap();
        let mut best = 0.0f64;
        for j in 0..=6usize {
            let x = train.state(0, j)[0];
            let disc = (-0.05_f64 * j as f64 / 6.0).exp();
            best = best.max(disc * (x - 100.0).max(0.0));
        }
        let mut ev = Evaluator::new(&problem, &h).unwrap();
        let v0 = ev.value(0, 0, 1, train.state(0, 0)).unwrap();
        assert!(
            (v0 - best).abs() <= 1e-10 * best.max(1.0),
            "readout {v0} vs deterministic optimum {best}"
        );
    }

    #[test]
    fn evaluator_matches_block_evaluation_bitwise() {
        let problem = max_call(2, 5, 2);
        let train = simulate_gbm::<f64>(&gbm(2, 0.2, 5), 500, 21).unwrap();
        let basis = build_basis(&BasisSpec::Psi2 { dim: 2 }).unwrap();
        let reinforce = problem.default_reinforce();
        let h = solve_hrr_b(
            &problem,
            &train,
            &basis,
            &reinforce,
            2,
            &SolverOptions::default(),
        )
        .unwrap();
        // Fresh states not seen in training.
        let test = simulate_gbm::<f64>(&gbm(2, 0.2, 5), 40, 77).unwrap();
        let mut states = Vec::new();
        test.gather_epoch(2, 0..40, &mut states);
        let mut scratch_counters = CostCounters::new();
        let mut block = BlockEval::new(
            &problem,
            &basis,
            &states,
            &reinforce,
            None,
            &mut scratch_counters,
        )
        .unwrap();
        let view = h.cells_view();
        block
            .materialize_values(view, 2, 2, &mut scratch_counters)
            .unwrap();
        let vals = block.memo[&(2, 2)].clone();
        let cont = block
            .continuation_vectors(view, 2, 2, &mut scratch_counters)
            .unwrap();
        let mut ev = Evaluator::new(&problem, &h).unwrap();
        for m in 0..40 {
            let x = test.state(m, 2);
            for y in 0..3 {
                let scalar_v = ev.value(2, 2, y, x).unwrap();
                assert_eq!(scalar_v, vals[y][m], "value mismatch at path {m} y {y}");
                let scalar_c = ev.continuation(2, 2, y, x).unwrap();
                assert_eq!(scalar_c, cont[y][m], "cont mismatch at path {m} y {y}");
            }
        }
    }

    #[test]
    fn recursion_depth_is_bounded() {
        let problem = max_call(2, 6, 1);
        let train = simulate_gbm::<f64>(&gbm(2, 0.2, 6), 300, 4).unwrap();
        let basis = build_basis(&BasisSpec::Psi1 { dim: 2 }).unwrap();
        let reinforce = problem.default_reinforce();
        let h = solve_hrr_b(
            &problem,
            &train,
            &basis,
            &reinforce,
            4,
            &SolverOptions::default(),
        )
        .unwrap();
        let mut ev = Evaluator::new(&problem, &h).unwrap();
        let x = [105.0, 95.0];
        for (level, epoch) in [(4usize, 0usize), (4, 3), (2, 5), (4, 5), (0, 2)] {
            if h.is_skipped(level, epoch) {
                continue;
            }
            ev.value(level, epoch, 1, &x).unwrap();
            let steps = ev.visited_cells().saturating_sub(1);
            assert!(
                steps <= level.min(6 - epoch),
                "({level}, {epoch}): {steps} recursion steps"
            );
        }
    }

    #[test]
    fn level_coincidence_is_exact() {
        let problem = max_call(2, 5, 1);
        let train = simulate_gbm::<f64>(&gbm(2, 0.2, 5), 400, 31).unwrap();
        let basis = build_basis(&BasisSpec::Psi1 { dim: 2 }).unwrap();
        let reinforce = problem.default_reinforce();
        let h = solve_hrr_a(
            &problem,
            &train,
            &basis,
            &reinforce,
            Termination::Depth(5),
            &SolverOptions::default(),
        )
        .unwrap();
        let mut ev = Evaluator::new(&problem, &h).unwrap();
        let x = [111.0, 93.0];
        for j in 0..=5usize {
            let base = 5 - j;
            let v_base = ev.value(base.min(5), j, 1, &x).unwrap();
            for i in base..=5usize {
                let v = ev.value(i, j, 1, &x).unwrap();
                assert_eq!(v, v_base, "levels {base} and {i} differ at epoch {j}");
            }
        }
    }

    #[test]
    fn adaptive_termination_stops_early_on_flat_residuals() {
        // Past level i = J - j every cell is reused, so at i = J the
        // residual change is exactly zero and adaptive runs never exceed
        // the horizon; with a huge theta they stop at level one.
        let problem = max_call(2, 4, 1);
        let train = simulate_gbm::<f64>(&gbm(2, 0.2, 4), 300, 8).unwrap();
        let basis = build_basis(&BasisSpec::Psi1 { dim: 2 }).unwrap();
        let reinforce = problem.default_reinforce();
        let h = solve_hrr_a(
            &problem,
            &train,
            &basis,
            &reinforce,
            Termination::Adaptive {
                theta: 1e9,
                max_depth: 4,
            },
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(h.depth(), 1);
        let tight = solve_hrr_a(
            &problem,
            &train,
            &basis,
            &reinforce,
            Termination::Adaptive {
                theta: 1e-12,
                max_depth: 4,
            },
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(tight.depth(), 4);
    }

    #[test]
    fn rejects_depth_beyond_horizon() {
        let problem = max_call(2, 4, 1);
        let train = simulate_gbm::<f64>(&gbm(2, 0.2, 4), 100, 8).unwrap();
        let basis = build_basis(&BasisSpec::Psi1 { dim: 2 }).unwrap();
        let reinforce = problem.default_reinforce();
        assert!(solve_hrr_b(
            &problem,
            &train,
            &basis,
            &reinforce,
            5,
            &SolverOptions::default()
        )
        .is_err());
    }

    #[test]
    fn truncation_requires_bound_and_is_recorded() {
        let problem = max_call(2, 4, 1);
        let train = simulate_gbm::<f64>(&gbm(2, 0.2, 4), 100, 8).unwrap();
        let basis = build_basis(&BasisSpec::Psi1 { dim: 2 }).unwrap();
        let opts = SolverOptions {
            truncate: true,
            ..SolverOptions::default()
        };
        assert!(solve_standard(&problem, &train, &basis, &opts).is_err());
        let bounded = max_call(2, 4, 1).with_cash_flow_bound(50.0);
        let h = solve_standard(&bounded, &train, &basis, &opts).unwrap();
        assert_eq!(h.truncation(), Some(200.0));
    }

    #[test]
    fn save_load_round_trip_preserves_evaluations() {
        let problem = max_call(2, 5, 2);
        let train = simulate_gbm::<f64>(&gbm(2, 0.2, 5), 400, 55).unwrap();
        let basis = build_basis(&BasisSpec::Psi2 { dim: 2 }).unwrap();
        let reinforce = problem.default_reinforce();
        let h = solve_hrr_b(
            &problem,
            &train,
            &basis,
            &reinforce,
            2,
            &SolverOptions::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("hierarchy.json");
        save_hierarchy(&h, &file).unwrap();
        let loaded = load_hierarchy::<f64>(&file).unwrap();
        assert_eq!(loaded.algorithm(), h.algorithm());
        assert_eq!(loaded.depth(), h.depth());
        assert_eq!(loaded.train_seed(), h.train_seed());
        assert_eq!(loaded.counters(), h.counters());
        let mut ev_a = Evaluator::new(&problem, &h).unwrap();
        let mut ev_b = Evaluator::new(&problem, &loaded).unwrap();
        for x in [[95.0, 101.0], [120.0, 80.0], [99.5, 99.5]] {
            for j in 0..5usize {
                if loaded.is_skipped(2, j) {
                    continue;
                }
                assert_eq!(
                    ev_a.value(2, j, 1, &x).unwrap(),
                    ev_b.value(2, j, 1, &x).unwrap()
                );
            }
        }
    }

    #[test]
    fn custom_basis_cannot_be_saved() {
        use crate::basis::Feature;
        let problem = max_call(1, 3, 1);
        let train = simulate_gbm::<f64>(&gbm(1, 0.2, 3), 50, 5).unwrap();
        let basis = BasisFamily::from_features(
            "adhoc",
            1,
            vec![Feature::Constant, Feature::RawMonomial(vec![(0, 1)])],
        );
        let h = solve_standard(&problem, &train, &basis, &SolverOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(save_hierarchy(&h, &dir.path().join("h.json")).is_err());
    }

    #[test]
    fn single_precision_training_runs() {
        let problem =
            StoppingProblem::<f32, _>::new(2, 4, 1, 0.05, 1.0, MaxCall { strike: 100.0f32 })
                .unwrap();
        let train = simulate_gbm::<f32>(&gbm(2, 0.2, 4), 200, 6).unwrap();
        let basis = build_basis::<f32>(&BasisSpec::Psi1 { dim: 2 }).unwrap();
        let reinforce = problem.default_reinforce();
        let h = solve_hrr_b(
            &problem,
            &train,
            &basis,
            &reinforce,
            1,
            &SolverOptions::default(),
        )
        .unwrap();
        let mut ev = Evaluator::new(&problem, &h).unwrap();
        let v = ev.value(1, 0, 1, &[100.0f32, 100.0]).unwrap();
        assert!(v.is_finite() && v >= 0.0);
    }
}
