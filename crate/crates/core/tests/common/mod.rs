//! Oracles and helpers shared by the integration suites.
#![allow(dead_code)]

use lsmc::basis::{design_matrix, BasisFamily};
use lsmc::control::{ControlProblem, MaxCall, StoppingProblem};
use lsmc::mat::ColMatrix;
use lsmc::model::PathSet;
use lsmc::regression::{fit_least_squares, LsqOptions};

/// Binomial-tree value of a single-asset Bermudan call exercisable at the
/// `epochs + 1` dates `j T / epochs` (including time zero), computed on a
/// fine Cox-Ross-Rubinstein lattice with `steps_per_epoch` tree steps
/// between consecutive exercise dates.
pub fn bermudan_call_tree(
    x0: f64,
    strike: f64,
    rate: f64,
    dividend: f64,
    sigma: f64,
    maturity: f64,
    epochs: usize,
    steps_per_epoch: usize,
) -> f64 {
    let n = epochs * steps_per_epoch;
    let dt = maturity / n as f64;
    let up = (sigma * dt.sqrt()).exp();
    let down = 1.0 / up;
    let disc = (-rate * dt).exp();
    let q = (((rate - dividend) * dt).exp() - down) / (up - down);
    assert!((0.0..=1.0).contains(&q), "tree step too coarse: q = {q}");
    let price = |k: usize, i: usize| x0 * up.powi(2 * i as i32 - k as i32);
    let payoff = |x: f64| (x - strike).max(0.0);

    let mut values: Vec<f64> = (0..=n).map(|i| payoff(price(n, i))).collect();
    for k in (0..n).rev() {
        for i in 0..=k {
            values[i] = disc * (q * values[i + 1] + (1.0 - q) * values[i]);
        }
        if k % steps_per_epoch == 0 {
            for i in 0..=k {
                values[i] = values[i].max(payoff(price(k, i)));
            }
        }
    }
    values[0]
}

/// Reference implementation of the direct reinforced-regression recursion
/// for single stopping: at each epoch regress the realised next-epoch
/// values on the basis plus the previously fitted value function evaluated
/// at the current state, then apply `v = max(g, c)`. Returns one
/// coefficient vector (basis first, reinforcement weight last) per epoch.
///
/// Evaluating the fitted value at an arbitrary state unwinds the full
/// chain of fits down to the terminal payoff, which is what makes the
/// recursion cost quadratic in the horizon.
pub fn direct_rr_single_stopping(
    problem: &StoppingProblem<f64, MaxCall<f64>>,
    train: &PathSet<f64>,
    basis: &BasisFamily<f64>,
) -> Vec<Vec<f64>> {
    assert_eq!(problem.num_controls(), 2, "single stopping only");
    let horizon = train.horizon();
    let num_paths = train.num_paths();
    let dim = train.dim();
    let k = basis.len();
    let mut coeffs: Vec<Vec<f64>> = vec![Vec::new(); horizon];
    let mut scratch = Vec::new();
    let mut row = vec![0.0; k];

    // Fitted continuation of epoch `e` at state `x`, given the chained
    // value `child = v_hat_{e+1}(x)`.
    let continuation = |coeffs: &[Vec<f64>], e: usize, row: &[f64], child: f64| -> f64 {
        let c = &coeffs[e];
        let mut acc = 0.0;
        for (w, f) in c[..k].iter().zip(row.iter()) {
            acc += w * f;
        }
        acc + c[k] * child
    };
    // Chained value v_hat_{e}(x) evaluated from the fits at epochs e..J.
    let chain_value = |coeffs: &[Vec<f64>],
                       e: usize,
                       x: &[f64],
                       row: &mut [f64],
                       scratch: &mut Vec<f64>|
     -> f64 {
        basis.eval_row(x, scratch, row);
        let mut value = problem.terminal_value(1, x);
        for kk in (e..horizon).rev() {
            let c = continuation(coeffs, kk, row, value);
            let g = problem.cash_flow(kk, 1, 1, x);
            let mut best = c; // hold
            if g > best {
                best = g;
            }
            value = best;
        }
        value
    };

    // Targets start as terminal values at X_J.
    let mut targets: Vec<f64> = (0..num_paths)
        .map(|m| problem.terminal_value(1, train.state(m, horizon)))
        .collect();

    for j in (0..horizon).rev() {
        // Reinforcement column: chained value of epoch j + 1 at X_j.
        let mut col = vec![0.0; num_paths];
        let mut states = vec![0.0; num_paths * dim];
        for m in 0..num_paths {
            let x = train.state(m, j);
            states[m * dim..(m + 1) * dim].copy_from_slice(x);
            col[m] = chain_value(&coeffs, j + 1, x, &mut row, &mut scratch);
        }
        let design: ColMatrix<f64> =
            design_matrix(basis, &states, dim, &[col.as_slice()]).expect("design");
        let fit = fit_least_squares(&design, &targets, &LsqOptions::default()).expect("fit");
        coeffs[j] = fit.coefficients;

        // New targets: v_hat_j at X_j reusing the chained column.
        for m in 0..num_paths {
            let x = train.state(m, j);
            basis.eval_row(x, &mut scratch, &mut row);
            let c = continuation(&coeffs, j, &row, col[m]);
            let g = problem.cash_flow(j, 1, 1, x);
            targets[m] = if g > c { g } else { c };
        }
    }
    coeffs
}

/// Relative residual of the best least-squares quadratic `a + b x + c x^2`
/// through the points, as `sqrt(rss) / norm(y)`.
pub fn quadratic_fit_rel_residual(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rows = xs.len();
    let mut data = Vec::with_capacity(rows * 3);
    data.extend(std::iter::repeat(1.0).take(rows));
    data.extend(xs.iter().copied());
    data.extend(xs.iter().map(|x| x * x));
    let design = ColMatrix::from_col_major(rows, 3, data);
    let fit = fit_least_squares(&design, ys, &LsqOptions::default()).expect("quadratic fit");
    let norm = ys.iter().map(|y| y * y).sum::<f64>().sqrt();
    fit.rss.max(0.0).sqrt() / norm.max(f64::MIN_POSITIVE)
}
