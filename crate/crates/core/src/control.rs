//! Discrete-time stochastic control problems with finite control and action
//! sets.
//!
//! A problem runs over epochs `j = 0..=J`. At epoch `j` the controller holds
//! a control `y` from the ordered finite set `L`, observes the exogenous
//! state `x`, picks an action `a` from the admissible subset of the ordered
//! finite set `K`, collects the cash flow `H_j(a, y, x)` and moves to the
//! control `phi(a, y)` for epoch `j + 1`. Discounting is baked into the cash
//! flows, so downstream regressions never apply discount factors themselves.
//!
//! Controls and actions are addressed by their index into `L` and `K`. The
//! index order is fixed at construction and doubles as the tie-breaking
//! order wherever a maximiser has to be picked.

use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};

/// Subset of the action set, stored as a bitmask over action indices.
///
/// Iteration is always in ascending index order, which is what makes
/// argmax tie-breaking deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSet(u32);

impl ActionSet {
    /// Empty set.
    pub const EMPTY: Self = Self(0);

    /// Builds a set from action indices.
    pub fn from_indices(indices: &[usize]) -> Self {
        let mut mask = 0u32;
        for &a in indices {
            assert!(a < 32, "action index out of range");
            mask |= 1 << a;
        }
        Self(mask)
    }

    pub fn contains(self, a: usize) -> bool {
        a < 32 && self.0 & (1 << a) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Action indices in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |&a| self.0 & (1 << a) != 0)
    }
}

/// A stochastic control problem with finite controls and actions.
///
/// Implementations must be pure: every method is a deterministic function
/// of its arguments. Index arguments are assumed valid; the `checked_*`
/// free functions validate them for callers working with external input.
pub trait ControlProblem<T: Scalar>: Send + Sync {
    /// Short description used to match stored artifacts to problems.
    fn id(&self) -> String;

    /// Number of decision epochs `J`; states exist for `j = 0..=J`.
    fn horizon(&self) -> usize;

    /// Dimension `d` of the exogenous state.
    fn state_dim(&self) -> usize;

    /// Size of the ordered control set `L`.
    fn num_controls(&self) -> usize;

    /// Size of the ordered action set `K`.
    fn num_actions(&self) -> usize;

    /// Numeric value of control index `y` (rights left, fill level, ...).
    fn control_level(&self, y: usize) -> T;

    /// Numeric value of action index `a` (for gas: -1, 0, +1).
    fn action_value(&self, a: usize) -> i32;

    /// Admissible action indices at epoch `j` in control `y` and state `x`.
    /// Never empty for valid inputs.
    fn admissible(&self, j: usize, y: usize, x: &[T]) -> ActionSet;

    /// Control index reached at epoch `j + 1` after taking action `a` at
    /// epoch `j` in control `y`.
    fn transition(&self, j: usize, a: usize, y: usize) -> usize;

    /// Cash flow `H_j(a, y, x)`, discounted to time zero.
    fn cash_flow(&self, j: usize, a: usize, y: usize, x: &[T]) -> T;

    /// Terminal value `v_J(y, x)`: best single cash flow at the horizon.
    fn terminal_value(&self, y: usize, x: &[T]) -> T {
        let j = self.horizon();
        let mut best = T::neg_infinity();
        for a in self.admissible(j, y, x).iter() {
            let h = self.cash_flow(j, a, y, x);
            if h > best {
                best = h;
            }
        }
        best
    }

    /// Uniform bound `C_H` on `|H_j|`, when configured. Only consulted by
    /// the optional truncation feature.
    fn cash_flow_bound(&self) -> Option<T> {
        None
    }

    /// Control the system starts in at epoch zero.
    fn initial_control(&self) -> usize;

    /// Default reinforcement sets `L^y`, one list of control indices per
    /// control `y`.
    fn default_reinforce(&self) -> Vec<Vec<usize>>;
}

/// Validates indices and state, then delegates to [`ControlProblem::admissible`].
pub fn checked_admissible<T: Scalar, P: ControlProblem<T> + ?Sized>(
    problem: &P,
    j: usize,
    y: usize,
    x: &[T],
) -> Result<ActionSet> {
    validate_epoch(problem, j)?;
    validate_control(problem, y)?;
    validate_state(problem, x)?;
    Ok(problem.admissible(j, y, x))
}

/// Validates indices, then delegates to [`ControlProblem::transition`].
pub fn checked_transition<T: Scalar, P: ControlProblem<T> + ?Sized>(
    problem: &P,
    j: usize,
    a: usize,
    y: usize,
) -> Result<usize> {
    validate_epoch(problem, j)?;
    validate_control(problem, y)?;
    validate_action(problem, a)?;
    let next = problem.transition(j, a, y);
    if next >= problem.num_controls() {
        return Err(Error::InvalidInput(format!(
            "transition left the control set: {next}"
        )));
    }
    Ok(next)
}

/// Validates indices and state, then delegates to [`ControlProblem::cash_flow`].
pub fn checked_cash_flow<T: Scalar, P: ControlProblem<T> + ?Sized>(
    problem: &P,
    j: usize,
    a: usize,
    y: usize,
    x: &[T],
) -> Result<T> {
    validate_epoch(problem, j)?;
    validate_control(problem, y)?;
    validate_action(problem, a)?;
    validate_state(problem, x)?;
    let h = problem.cash_flow(j, a, y, x);
    if !h.is_finite() {
        return Err(Error::NonFinite("cash flow"));
    }
    Ok(h)
}

/// Validates inputs, then delegates to [`ControlProblem::terminal_value`].
pub fn checked_terminal_value<T: Scalar, P: ControlProblem<T> + ?Sized>(
    problem: &P,
    y: usize,
    x: &[T],
) -> Result<T> {
    validate_control(problem, y)?;
    validate_state(problem, x)?;
    Ok(problem.terminal_value(y, x))
}

fn validate_epoch<T: Scalar, P: ControlProblem<T> + ?Sized>(problem: &P, j: usize) -> Result<()> {
    if j > problem.horizon() {
        return Err(Error::InvalidInput(format!(
            "epoch {j} beyond horizon {}",
            problem.horizon()
        )));
    }
    Ok(())
}

fn validate_control<T: Scalar, P: ControlProblem<T> + ?Sized>(problem: &P, y: usize) -> Result<()> {
    if y >= problem.num_controls() {
        return Err(Error::InvalidInput(format!(
            "control index {y} outside 0..{}",
            problem.num_controls()
        )));
    }
    Ok(())
}

fn validate_action<T: Scalar, P: ControlProblem<T> + ?Sized>(problem: &P, a: usize) -> Result<()> {
    if a >= problem.num_actions() {
        return Err(Error::InvalidInput(format!(
            "action index {a} outside 0..{}",
            problem.num_actions()
        )));
    }
    Ok(())
}

fn validate_state<T: Scalar, P: ControlProblem<T> + ?Sized>(problem: &P, x: &[T]) -> Result<()> {
    if x.len() != problem.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.state_dim(),
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("state vector"));
    }
    Ok(())
}

// ============================================================================
// Payoffs
// ============================================================================

/// Undiscounted exercise payoff `g(x) >= 0` of a stopping problem.
pub trait Payoff<T>: Send + Sync {
    fn value(&self, x: &[T]) -> T;
}

impl<T, F> Payoff<T> for F
where
    F: Fn(&[T]) -> T + Send + Sync,
{
    fn value(&self, x: &[T]) -> T {
        self(x)
    }
}

/// Call on the maximum coordinate: `g(x) = max(max_i x_i - strike, 0)`.
#[derive(Debug, Clone, Copy)]
pub struct MaxCall<T> {
    pub strike: T,
}

impl<T: Scalar> Payoff<T> for MaxCall<T> {
    fn value(&self, x: &[T]) -> T {
        let mut best = T::neg_infinity();
        for &v in x {
            if v > best {
                best = v;
            }
        }
        (best - self.strike).max(T::zero())
    }
}

// ============================================================================
// Stopping problems (single and multiple exercise rights)
// ============================================================================

/// Bermudan-style stopping with `y_max` exercise rights.
///
/// Controls are the number of rights left, `L = {0, 1, ..., y_max}`. Actions
/// are `K = {0, 1}` (hold, exercise); exercising is admissible whenever at
/// least one right is left, including at epoch zero. The cash flow for
/// exercising at epoch `j` is `g(x) * exp(-r t_j)` with `t_j = j T / J`.
pub struct StoppingProblem<T, P> {
    dim: usize,
    epochs: usize,
    rights: usize,
    rate: f64,
    maturity: f64,
    payoff: P,
    discounts: Vec<T>,
    cash_flow_bound: Option<T>,
}

impl<T: Scalar, P: Payoff<T>> StoppingProblem<T, P> {
    /// Builds a stopping problem. `epochs` is `J >= 1`; `rights >= 1`;
    /// `maturity > 0` in years. The payoff must be nonnegative.
    pub fn new(
        dim: usize,
        epochs: usize,
        rights: usize,
        rate: f64,
        maturity: f64,
        payoff: P,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("state dimension must be >= 1".into()));
        }
        if epochs == 0 {
            return Err(Error::InvalidInput("horizon must be >= 1".into()));
        }
        if rights == 0 {
            return Err(Error::InvalidInput(
                "need at least one exercise right".into(),
            ));
        }
        if !(maturity > 0.0) {
            return Err(Error::InvalidInput("maturity must be positive".into()));
        }
        if !rate.is_finite() {
            return Err(Error::InvalidInput("rate must be finite".into()));
        }
        let dt = maturity / epochs as f64;
        let discounts = (0..=epochs)
            .map(|j| real::<T>((-rate * dt * j as f64).exp()))
            .collect();
        Ok(Self {
            dim,
            epochs,
            rights,
            rate,
            maturity,
            payoff,
            discounts,
            cash_flow_bound: None,
        })
    }

    /// Sets the uniform cash-flow bound `C_H` used by optional truncation.
    pub fn with_cash_flow_bound(mut self, bound: T) -> Self {
        self.cash_flow_bound = Some(bound);
        self
    }

    pub fn rights(&self) -> usize {
        self.rights
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    /// Undiscounted payoff at `x`.
    pub fn payoff_value(&self, x: &[T]) -> T {
        self.payoff.value(x)
    }
}

impl<T: Scalar, P: Payoff<T>> ControlProblem<T> for StoppingProblem<T, P> {
    fn id(&self) -> String {
        format!(
            "stopping(d={}, J={}, rights={}, r={}, T={})",
            self.dim, self.epochs, self.rights, self.rate, self.maturity
        )
    }

    fn horizon(&self) -> usize {
        self.epochs
    }

    fn state_dim(&self) -> usize {
        self.dim
    }

    fn num_controls(&self) -> usize {
        self.rights + 1
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn control_level(&self, y: usize) -> T {
        real(y as f64)
    }

    fn action_value(&self, a: usize) -> i32 {
        a as i32
    }

    fn admissible(&self, _j: usize, y: usize, _x: &[T]) -> ActionSet {
        if y >= 1 {
            ActionSet::from_indices(&[0, 1])
        } else {
            ActionSet::from_indices(&[0])
        }
    }

    fn transition(&self, _j: usize, a: usize, y: usize) -> usize {
        y.saturating_sub(a)
    }

    fn cash_flow(&self, j: usize, a: usize, y: usize, x: &[T]) -> T {
        debug_assert!(a == 0 || y >= 1);
        if a == 1 {
            self.payoff.value(x) * self.discounts[j]
        } else {
            T::zero()
        }
    }

    fn cash_flow_bound(&self) -> Option<T> {
        self.cash_flow_bound
    }

    fn initial_control(&self) -> usize {
        self.rights
    }

    fn default_reinforce(&self) -> Vec<Vec<usize>> {
        // Reinforce with the one-right value for single stopping, with all
        // positive-rights values for multiple stopping.
        let set: Vec<usize> = if self.rights == 1 {
            vec![1]
        } else {
            (1..=self.rights).collect()
        };
        vec![set; self.num_controls()]
    }
}

// ============================================================================
// Gas storage
// ============================================================================

/// Gas storage with a finite fill grid and unit injection/withdrawal.
///
/// Controls are fill levels `L = {0, 1/N, ..., 1}` addressed by the integer
/// number of units held. Actions are `K = {-1, 0, +1}` (sell one unit, hold,
/// buy one unit) in that order. A full store cannot buy, an empty store
/// cannot sell, and no trade is allowed at epoch zero. Trading one unit at
/// epoch `j` moves cash `-a * (1/N) * x2 * exp(-r j dt / 365)` where `x2` is
/// the second state coordinate (the market gas price) and `dt` is the
/// trading stride in days.
pub struct GasStorageProblem<T> {
    levels: usize,
    epochs: usize,
    stride_days: f64,
    rate: f64,
    initial_level: usize,
    discounts: Vec<T>,
    cash_flow_bound: Option<T>,
}

impl<T: Scalar> GasStorageProblem<T> {
    /// Builds a storage problem with `levels = N` capacity units, horizon
    /// `epochs = J`, trading stride in days and initial fill in units.
    pub fn new(
        levels: usize,
        epochs: usize,
        stride_days: f64,
        rate: f64,
        initial_level: usize,
    ) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidInput(
                "need at least one capacity unit".into(),
            ));
        }
        if epochs == 0 {
            return Err(Error::InvalidInput("horizon must be >= 1".into()));
        }
        if !(stride_days > 0.0) {
            return Err(Error::InvalidInput("stride must be positive".into()));
        }
        if !rate.is_finite() {
            return Err(Error::InvalidInput("rate must be finite".into()));
        }
        if initial_level > levels {
            return Err(Error::InvalidInput(format!(
                "initial level {initial_level} outside 0..={levels}"
            )));
        }
        let discounts = (0..=epochs)
            .map(|j| real::<T>((-rate * stride_days * j as f64 / 365.0).exp()))
            .collect();
        Ok(Self {
            levels,
            epochs,
            stride_days,
            rate,
            initial_level,
            discounts,
            cash_flow_bound: None,
        })
    }

    /// Sets the uniform cash-flow bound `C_H` used by optional truncation.
    pub fn with_cash_flow_bound(mut self, bound: T) -> Self {
        self.cash_flow_bound = Some(bound);
        self
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn initial_level(&self) -> usize {
        self.initial_level
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn stride_days(&self) -> f64 {
        self.stride_days
    }
}

impl<T: Scalar> ControlProblem<T> for GasStorageProblem<T> {
    fn id(&self) -> String {
        format!(
            "gas_storage(N={}, J={}, dt={}, r={}, y0={})",
            self.levels, self.epochs, self.stride_days, self.rate, self.initial_level
        )
    }

    fn horizon(&self) -> usize {
        self.epochs
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn num_controls(&self) -> usize {
        self.levels + 1
    }

    fn num_actions(&self) -> usize {
        3
    }

    fn control_level(&self, y: usize) -> T {
        real(y as f64 / self.levels as f64)
    }

    fn action_value(&self, a: usize) -> i32 {
        a as i32 - 1
    }

    fn admissible(&self, j: usize, y: usize, _x: &[T]) -> ActionSet {
        if j == 0 {
            // No trading at the initial epoch.
            return ActionSet::from_indices(&[1]);
        }
        match y {
            0 => ActionSet::from_indices(&[1, 2]),
            y if y == self.levels => ActionSet::from_indices(&[0, 1]),
            _ => ActionSet::from_indices(&[0, 1, 2]),
        }
    }

    fn transition(&self, _j: usize, a: usize, y: usize) -> usize {
        match a {
            0 => y.saturating_sub(1),
            1 => y,
            _ => (y + 1).min(self.levels),
        }
    }

    fn cash_flow(&self, j: usize, a: usize, _y: usize, x: &[T]) -> T {
        let trade = real::<T>(f64::from(self.action_value(a)));
        let unit = real::<T>(1.0 / self.levels as f64);
        -trade * unit * x[1] * self.discounts[j]
    }

    fn cash_flow_bound(&self) -> Option<T> {
        self.cash_flow_bound
    }

    fn initial_control(&self) -> usize {
        self.initial_level
    }

    fn default_reinforce(&self) -> Vec<Vec<usize>> {
        // Reinforce with the value at the initial fill level.
        vec![vec![self.initial_level]; self.num_controls()]
    }
}

// ============================================================================
// Tests
// ============================================================================
