//! Two-asset Bermudan max-call priced two ways on the same thin basis:
//! standard value regression and a depth-2 reinforced hierarchy.

use lsmc::{
    build_basis, lower_bound, simulate_gbm, solve_hrr_b, solve_standard, BasisSpec, ControlProblem,
    GbmParams, MaxCall, SolverOptions, StoppingProblem,
};

fn main() -> lsmc::Result<()> {
    // Strike 100, nine quarterly exercise dates over three years,
    // r = 5%, dividend 10%, sigma = 20%.
    let market = GbmParams {
        dim: 2,
        x0: 100.0,
        rate: 0.05,
        dividend: 0.1,
        sigma: 0.2,
        maturity: 3.0,
        epochs: 9,
    };
    let problem = StoppingProblem::new(2, 9, 1, 0.05, 3.0, MaxCall { strike: 100.0 })?;

    let train = simulate_gbm::<f64>(&market, 100_000, 1)?;
    let test = simulate_gbm::<f64>(&market, 200_000, 2)?;
    let opts = SolverOptions::default();

    // Thin basis: constant plus the two order statistics.
    let psi1 = build_basis(&BasisSpec::Psi1 { dim: 2 })?;

    let standard = solve_standard(&problem, &train, &psi1, &opts)?;
    let sr = lower_bound(&problem, &standard, &test, 0)?;

    let depth = 2;
    let reinforce = problem.default_reinforce();
    let hier = solve_hrr_b(&problem, &train, &psi1, &reinforce, depth, &opts)?;
    let rr = lower_bound(&problem, &hier, &test, depth)?;

    println!("standard   {:.3} +- {:.3}", sr.estimate, sr.half_width);
    println!("reinforced {:.3} +- {:.3}", rr.estimate, rr.half_width);
    Ok(())
}
