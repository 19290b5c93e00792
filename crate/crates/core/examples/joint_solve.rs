//! Solves the joint AP selection and power control problem on one desk-scale
//! realization and compares the relaxed and rounded solutions.
//!
//! cargo run --release --example joint_solve -- [seed]

use cfsec::optimizer::Problem;
use cfsec::{apg_solve, estimate_gains, generate_scenario, round_and_polish, ApgParams, DecisionVars, GroupingRule, NetworkConfig, PenaltyWeights};

fn main() -> cfsec::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = NetworkConfig { seed, ..NetworkConfig::desk() };
    let stats = estimate_gains(&generate_scenario(&cfg)?, 0, &GroupingRule::default())?;
    let problem = Problem::joint(&stats, cfg.rate_threshold);
    let params = ApgParams::default();

    let start = DecisionVars::initial(cfg.aps, cfg.users);
    let sol = apg_solve(&problem, &params, &PenaltyWeights::default(), &start)?;
    for outer in 0..sol.outer_iterations {
        if let Some(last) = sol.trace.iter().filter(|r| r.outer == outer).last() {
            println!(
                "outer {outer}: rho {:>8.0e}  {:>4} steps  f {:.5}  R_E {:.5}  psi {:.2e} {:.2e} {:.2e}",
                last.rho_pen, last.iteration, last.f, last.rate_e, last.psi1, last.psi2, last.psi3
            );
        }
    }
    println!("converged: {}", sol.converged);

    let polished = round_and_polish(&sol.vars, &stats, cfg.rate_threshold, &params, &sol.weights)?;
    let served = polished.assoc.iter().filter(|&&a| a).count();
    println!("relaxed R_E {:.5}, rounded R_E {:.5} ({} of {} links kept)", sol.eval.rate_e, polished.rate_e, served, cfg.aps * cfg.users);
    println!("user rates: {:.3?}", polished.rates);
    Ok(())
}
