//! Rounding the relaxed association to a binary one and re-tuning power on it.

use ndarray::{Array2, Zip};

use super::apg::{apg_solve, ApgParams};
use super::{DecisionVars, PenaltyWeights, Problem};
use crate::channel::ChannelStats;
use crate::Result;

/// QoS slack below which a rounded point counts as violating the threshold.
const QOS_SLACK: f64 = 0.01;
const POLISH_MAX_INNER: usize = 500;
const POLISH_MAX_OUTER: usize = 3;

#[derive(Debug, Clone)]
pub struct Polished {
    pub theta: Array2<f64>,
    pub assoc: Array2<bool>,
    /// Users that had no AP after rounding and were given their strongest `z`.
    pub forced: Vec<usize>,
    /// Eavesdropper rate right after rounding, before the power-only solve.
    pub pre_rate_e: f64,
    pub rate_e: f64,
    pub rates: Vec<f64>,
    pub polish_accepted: bool,
}

impl Polished {
    pub fn min_rate(&self) -> f64 {
        self.rates.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Rounds `a = z^2` at 0.5, keeps every user served, zeroes power on dropped
/// links and runs a short power-only solve on the rounded support.
///
/// The re-tuned power replaces the rounded one only if it does not raise the
/// eavesdropper rate, or if the rounded point violates QoS and the re-tuned
/// one is closer to meeting it.
pub fn round_and_polish(v: &DecisionVars, stats: &ChannelStats, rate_threshold: f64, params: &ApgParams, weights: &PenaltyWeights) -> Result<Polished> {
    let (aps, users) = v.dim();
    let mut assoc = v.z.mapv(|z| z * z >= 0.5);
    let mut forced = Vec::new();
    for k in 0..users {
        if !assoc.column(k).iter().any(|&a| a) {
            let col = v.z.column(k);
            let mut best = 0;
            for l in 1..aps {
                if col[l] > col[best] {
                    best = l;
                }
            }
            assoc[[best, k]] = true;
            forced.push(k);
        }
    }

    let problem = Problem::power_only(stats, rate_threshold, assoc.clone());
    let z = assoc.mapv(|a| if a { 1.0 } else { 0.0 });
    let rounded = problem.project(&DecisionVars::new(v.theta.clone(), z));
    let pre_rate_e = stats.eve_rate(rounded.theta.view());
    let pre_rates = stats.user_rates(rounded.theta.view());
    let pre_min = pre_rates.iter().copied().fold(f64::INFINITY, f64::min);

    let polish_params = ApgParams { zeta: 0.0, max_inner: params.max_inner.min(POLISH_MAX_INNER), max_outer: POLISH_MAX_OUTER, ..params.clone() };
    let sol = apg_solve(&problem, &polish_params, weights, &rounded)?;
    let post_min = sol.eval.min_rate();
    let restores = pre_min < rate_threshold - QOS_SLACK && post_min > pre_min;
    let accept = sol.eval.rate_e <= pre_rate_e + 1e-9 || restores;

    let (theta, rate_e, rates) = if accept { (sol.vars.theta, sol.eval.rate_e, sol.eval.rates) } else { (rounded.theta, pre_rate_e, pre_rates) };
    debug_assert!(Zip::from(&theta).and(&assoc).all(|&t, &a| a || t == 0.0));
    Ok(Polished { theta, assoc, forced, pre_rate_e, rate_e, rates, polish_accepted: accept })
}
