//! Wires a parsed config through models, basis, solver and evaluation.

use std::time::Instant;

use anyhow::{anyhow, Context, Result};

use lsmc::basis::{build_basis, BasisSpec};
use lsmc::control::{ControlProblem, GasStorageProblem, MaxCall, StoppingProblem};
use lsmc::evaluate::{lower_bound, value_readout};
use lsmc::model::{simulate_gbm, simulate_oil_gas_subsampled, GbmParams, OilGasParams, PathSet};
use lsmc::solver::{
    solve_hrr_a, solve_hrr_b, solve_rr_diagonal, solve_standard, SolverOptions, Termination,
};

use crate::config::{
    BasisName, ExperimentConfig, MethodName, ModelConfig, ProblemConfig, RunConfig,
};

/// One output row: everything the CSV and JSON emitters need.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ResultRecord {
    pub method: &'static str,
    pub basis: String,
    pub d: usize,
    pub epochs: usize,
    pub y_max: usize,
    pub depth: usize,
    pub train_paths: usize,
    pub test_paths: usize,
    pub seed_train: u64,
    pub seed_test: u64,
    pub lower_bound: f64,
    pub half_width: f64,
    pub v0: f64,
    pub t_train_s: f64,
    pub t_eval_s: f64,
    pub n_lsq_solves: u64,
    pub n_basis_evals: u64,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    if cfg.options.workers > 0 {
        // Ignore the error if a pool already exists (tests call this twice).
        let _ = rayon_pool(cfg.options.workers);
    }

    let (train, test, x0) = simulate(cfg)?;
    match &cfg.problem {
        ProblemConfig::MaxCall(p) => {
            let problem = StoppingProblem::new(
                p.dim,
                p.epochs,
                1,
                p.rate,
                p.maturity,
                MaxCall { strike: p.strike },
            )
            .map_err(|e| anyhow!("problem.max_call: {e}"))?;
            let problem = match p.cash_flow_bound {
                Some(b) => problem.with_cash_flow_bound(b),
                None => problem,
            };
            execute(cfg, &problem, &train, &test, &x0, Some(p.strike), 1)
        }
        ProblemConfig::MultiStop(p) => {
            let problem = StoppingProblem::new(
                p.dim,
                p.epochs,
                p.rights,
                p.rate,
                p.maturity,
                MaxCall { strike: p.strike },
            )
            .map_err(|e| anyhow!("problem.multi_stop: {e}"))?;
            let problem = match p.cash_flow_bound {
                Some(b) => problem.with_cash_flow_bound(b),
                None => problem,
            };
            execute(cfg, &problem, &train, &test, &x0, Some(p.strike), p.rights)
        }
        ProblemConfig::GasStorage(p) => {
            let problem =
                GasStorageProblem::new(p.levels, p.epochs, p.stride_days, p.rate, p.initial_level)
                    .map_err(|e| anyhow!("problem.gas_storage: {e}"))?;
            let problem = match p.cash_flow_bound {
                Some(b) => problem.with_cash_flow_bound(b),
                None => problem,
            };
            execute(cfg, &problem, &train, &test, &x0, None, p.levels)
        }
    }
}

fn rayon_pool(workers: usize) -> std::result::Result<(), rayon::ThreadPoolBuildError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
}

fn simulate(cfg: &ExperimentConfig) -> Result<(PathSet<f64>, PathSet<f64>, Vec<f64>)> {
    let s = &cfg.sampling;
    match &cfg.model {
        ModelConfig::Gbm(m) => {
            let params = GbmParams {
                dim: m.dim,
                x0: m.x0,
                rate: m.rate,
                dividend: m.dividend,
                sigma: m.sigma,
                maturity: m.maturity,
                epochs: m.epochs,
            };
            let train = simulate_gbm(&params, s.train_paths, s.seed_train)
                .context("simulating training paths")?;
            let test = simulate_gbm(&params, s.test_paths, s.seed_test)
                .context("simulating test paths")?;
            Ok((train, test, vec![m.x0; m.dim]))
        }
        ModelConfig::OilGas(m) => {
            let params = OilGasParams {
                beta: m.beta,
                alpha1: m.alpha1,
                alpha2: m.alpha2,
                sigma1: m.sigma1,
                sigma2: m.sigma2,
                rho_w: m.rho_w,
                lambda: m.lambda,
                mu1: m.mu1,
                mu2: m.mu2,
                eta1: m.eta1,
                eta2: m.eta2,
                rho_j: m.rho_j,
                x0: m.x0,
                euler_steps: m.euler_steps,
                floor_at_zero: m.floor_at_zero,
            };
            let train = simulate_oil_gas_subsampled(&params, m.stride, s.train_paths, s.seed_train)
                .context("simulating training paths")?;
            let test = simulate_oil_gas_subsampled(&params, m.stride, s.test_paths, s.seed_test)
                .context("simulating test paths")?;
            Ok((train, test, m.x0.to_vec()))
        }
    }
}

fn basis_spec(run: &RunConfig, dim: usize, strike: Option<f64>) -> Result<BasisSpec> {
    Ok(match run.basis {
        BasisName::Psi1 => BasisSpec::Psi1 { dim },
        BasisName::Psi1g => BasisSpec::Psi1G {
            dim,
            strike: strike.ok_or_else(|| anyhow!("psi1g needs a strike-based problem"))?,
        },
        BasisName::Psi2 => BasisSpec::Psi2 { dim },
        BasisName::Psi3 => BasisSpec::Psi3 { dim },
        BasisName::PricePoly => BasisSpec::PricePoly {
            degree: run.degree.expect("validated"),
        },
        BasisName::JointPoly => BasisSpec::JointPoly {
            degree: run.degree.expect("validated"),
        },
    })
}

fn execute<P: ControlProblem<f64>>(
    cfg: &ExperimentConfig,
    problem: &P,
    train: &PathSet<f64>,
    test: &PathSet<f64>,
    x0: &[f64],
    strike: Option<f64>,
    y_max: usize,
) -> Result<Vec<ResultRecord>> {
    let options = SolverOptions {
        truncate: cfg.options.truncate,
        ..SolverOptions::default()
    };
    let mut records = Vec::with_capacity(cfg.runs.len());
    for (i, run) in cfg.runs.iter().enumerate() {
        let label = format!("runs[{i}] ({} {})", run.method.as_str(), run.basis);
        let spec = basis_spec(run, problem.state_dim(), strike).context(label.clone())?;
        let basis = build_basis(&spec).with_context(|| label.clone())?;
        let reinforce = run
            .reinforce
            .clone()
            .unwrap_or_else(|| problem.default_reinforce());

        let t0 = Instant::now();
        let hierarchy = match run.method {
            MethodName::Standard => solve_standard(problem, train, &basis, &options),
            MethodName::HrrB => solve_hrr_b(
                problem,
                train,
                &basis,
                &reinforce,
                run.depth.expect("validated"),
                &options,
            ),
            MethodName::HrrA => {
                let termination = match (run.depth, run.adaptive_theta) {
                    (Some(depth), None) => Termination::Depth(depth),
                    (None, Some(theta)) => Termination::Adaptive {
                        theta,
                        max_depth: problem.horizon(),
                    },
                    _ => unreachable!("validated"),
                };
                solve_hrr_a(problem, train, &basis, &reinforce, termination, &options)
            }
            MethodName::RrDiagonal => {
                solve_rr_diagonal(problem, train, &basis, &reinforce, &options)
            }
        }
        .with_context(|| format!("training {label}"))?;
        let t_train_s = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let level = hierarchy.depth();
        let v0 = value_readout(problem, &hierarchy, level, x0)
            .with_context(|| format!("value readout {label}"))?;
        let report = lower_bound(problem, &hierarchy, test, level)
            .with_context(|| format!("evaluating {label}"))?;
        let t_eval_s = t1.elapsed().as_secs_f64();

        let (n_lsq_solves, n_basis_evals) = if cfg.options.counters {
            let c = hierarchy.counters();
            (c.lsq_solves, c.basis_evals)
        } else {
            (0, 0)
        };

        records.push(ResultRecord {
            method: run.method.as_str(),
            basis: run
                .degree
                .map(|deg| format!("{}{deg}", run.basis))
                .unwrap_or_else(|| run.basis.to_string()),
            d: problem.state_dim(),
            epochs: problem.horizon(),
            y_max,
            depth: level,
            train_paths: cfg.sampling.train_paths,
            test_paths: cfg.sampling.test_paths,
            seed_train: cfg.sampling.seed_train,
            seed_test: cfg.sampling.seed_test,
            lower_bound: report.estimate,
            half_width: report.half_width,
            v0,
            t_train_s,
            t_eval_s,
            n_lsq_solves,
            n_basis_evals,
        });
    }
    Ok(records)
}
