//! Non-monotone accelerated projected gradient with penalty continuation.

use std::io::Write;

use ndarray::Zip;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::objective::{evaluate, gradient, Evaluation};
use super::{DecisionVars, Mode, PenaltyWeights, Problem};
use crate::format::sig9;
use crate::rng::{self, Purpose};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApgParams {
    /// Non-monotonicity degree in [0, 1); 0 gives monotone descent.
    pub zeta: f64,
    /// Relative objective change over `window` iterations that ends an inner solve.
    pub eps: f64,
    pub window: usize,
    pub max_inner: usize,
    pub max_outer: usize,
    /// Fixed step for the extrapolated point; `None` estimates `1/J` per outer iteration.
    pub step_vbar: Option<f64>,
    /// Fixed initial step for the correction point; `None` estimates `1/J`.
    pub step_v: Option<f64>,
    /// Gradient-difference pairs used to estimate the Lipschitz constant `J`.
    pub lipschitz_samples: usize,
    pub lipschitz_safety: f64,
    /// Step multiplier applied after every iteration (1 keeps steps fixed
    /// apart from backtracking).
    pub step_growth: f64,
    /// Total penalty below which the continuation loop stops.
    pub penalty_tol: f64,
    pub seed: u64,
}

impl Default for ApgParams {
    fn default() -> Self {
        Self {
            zeta: 0.5,
            eps: 1e-6,
            window: 10,
            max_inner: 5000,
            max_outer: 8,
            step_vbar: None,
            step_v: None,
            lipschitz_samples: 20,
            lipschitz_safety: 2.0,
            step_growth: 1.05,
            penalty_tol: 1e-6,
            seed: 0,
        }
    }
}

impl ApgParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.zeta) {
            return bad("zeta must lie in [0, 1)");
        }
        if !(self.eps > 0.0) || self.window == 0 || self.max_inner == 0 || self.max_outer == 0 {
            return bad("eps, window, max_inner and max_outer must be positive");
        }
        for s in [self.step_v, self.step_vbar].into_iter().flatten() {
            if !(s > 0.0 && s.is_finite()) {
                return bad("fixed step sizes must be positive");
            }
        }
        if self.lipschitz_samples == 0 || !(self.lipschitz_safety >= 1.0) {
            return bad("lipschitz_samples must be positive and lipschitz_safety >= 1");
        }
        if !(self.step_growth >= 1.0) {
            return bad("step_growth must be >= 1");
        }
        if !(self.penalty_tol >= 0.0) {
            return bad("penalty_tol must be non-negative");
        }
        Ok(())
    }
}

/// How the next iterate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    /// The extrapolated step passed the non-monotone acceptance test.
    Accelerated,
    /// The test failed but the extrapolated point still beat the correction point.
    FallbackAccelerated,
    /// The correction step from the current iterate was taken.
    Correction,
}

impl StepKind {
    pub fn label(self) -> &'static str {
        match self {
            StepKind::Accelerated => "accelerated",
            StepKind::FallbackAccelerated => "fallback-accelerated",
            StepKind::Correction => "correction",
        }
    }
}

/// Iterates and sequences of one inner solve.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub v: DecisionVars,
    pub v_prev: DecisionVars,
    pub v_tilde: DecisionVars,
    pub v_bar: DecisionVars,
    /// Objective at `v`.
    pub f: f64,
    pub q: f64,
    pub q_prev: f64,
    pub b: f64,
    pub c: f64,
    pub n: usize,
}

impl OptimizerState {
    pub fn new(v0: DecisionVars, f0: f64) -> Self {
        Self { v_prev: v0.clone(), v_tilde: v0.clone(), v_bar: v0.clone(), v: v0, f: f0, q: 1.0, q_prev: 0.0, b: 1.0, c: f0, n: 1 }
    }

    /// `v_bar = v + (q_prev/q)(v_tilde - v) + ((q_prev - 1)/q)(v - v_prev)`
    pub fn extrapolate(&mut self) -> &DecisionVars {
        let a = self.q_prev / self.q;
        let b = (self.q_prev - 1.0) / self.q;
        let to_tilde = self.v_tilde.sub(&self.v);
        let momentum = self.v.sub(&self.v_prev);
        self.v_bar = self.v.add_scaled(a, &to_tilde).add_scaled(b, &momentum);
        &self.v_bar
    }

    /// Moves to the next iterate and updates the `q`, `b`, `c` sequences.
    /// `c` stays the `zeta`-weighted average of all accepted objective values.
    pub fn advance(&mut self, v_next: DecisionVars, v_tilde_next: DecisionVars, f_next: f64, zeta: f64) {
        let q_next = (1.0 + (4.0 * self.q * self.q + 1.0).sqrt()) / 2.0;
        self.q_prev = self.q;
        self.q = q_next;
        let b_next = zeta * self.b + 1.0;
        self.c = (zeta * self.b * self.c + f_next) / b_next;
        self.b = b_next;
        self.v_prev = std::mem::replace(&mut self.v, v_next);
        self.v_tilde = v_tilde_next;
        self.f = f_next;
        self.n += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub outer: usize,
    pub iteration: usize,
    pub rho_pen: f64,
    pub f: f64,
    pub rate_e: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
    pub step: StepKind,
    /// Acceptance reference `c` before this step.
    pub c_before: f64,
    pub step_size: f64,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str = "outer,iteration,rho_pen,f,rate_e,psi1,psi2,psi3,step,c_before,step_size";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.outer,
            self.iteration,
            sig9(self.rho_pen),
            sig9(self.f),
            sig9(self.rate_e),
            sig9(self.psi1),
            sig9(self.psi2),
            sig9(self.psi3),
            self.step.label(),
            sig9(self.c_before),
            sig9(self.step_size)
        )
    }
}

pub fn write_trace_csv(rows: &[TraceRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", TraceRow::CSV_HEADER)?;
    for r in rows {
        writeln!(out, "{}", r.csv())?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub vars: DecisionVars,
    pub eval: Evaluation,
    /// Weights in force when `vars` was produced.
    pub weights: PenaltyWeights,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// True when the penalties dropped below `penalty_tol`.
    pub converged: bool,
    pub lipschitz: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

fn random_feasible(problem: &Problem, like: &DecisionVars, rng: &mut rng::Rng) -> DecisionVars {
    let (l, k) = like.dim();
    let mut v = DecisionVars::zeros(l, k);
    for mut row in v.theta.rows_mut() {
        let radius: f64 = rng.random();
        row.mapv_inplace(|_| rng.random::<f64>());
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        row.mapv_inplace(|x| x * radius / norm);
    }
    match problem.mode {
        Mode::Joint => v.z.mapv_inplace(|_| rng.random::<f64>()),
        Mode::PowerOnly { .. } => v.z.assign(&like.z),
    }
    problem.project(&v)
}

/// Estimates the gradient's Lipschitz constant from gradient differences over
/// nearby pairs of feasible points, half centered on `center` and half drawn
/// at random, and multiplies the largest ratio by `safety`.
pub fn estimate_lipschitz(problem: &Problem, w: &PenaltyWeights, center: &DecisionVars, samples: usize, safety: f64, seed: u64) -> f64 {
    let mut rng = rng::stream(seed, Purpose::Lipschitz, 0);
    let mut best: f64 = 0.0;
    for i in 0..samples {
        let x = if i % 2 == 0 { center.clone() } else { random_feasible(problem, center, &mut rng) };
        let scale = 10f64.powf(-1.0 - 3.0 * rng.random::<f64>());
        let mut y = x.clone();
        Zip::from(&mut y.theta).and(&mut y.z).for_each(|t, z| {
            *t += scale * rng.sample::<f64, _>(StandardNormal);
            *z += scale * rng.sample::<f64, _>(StandardNormal);
        });
        let y = problem.project(&y);
        let d = x.dist_sq(&y).sqrt();
        if d == 0.0 {
            continue;
        }
        let dg = gradient(&x, problem, w).dist_sq(&gradient(&y, problem, w)).sqrt();
        if dg.is_finite() {
            best = best.max(dg / d);
        }
    }
    (best * safety).max(1e-12)
}

const MAX_BACKTRACKS: usize = 60;

/// Minimizes the penalized objective from `v0`.
///
/// Each outer iteration runs the non-monotone APG inner loop at the current
/// penalty multiplier, then multiplies it by `varsigma` unless the penalties
/// have vanished. If they never do, the iterate with the smallest total
/// penalty is returned with `converged = false`.
pub fn apg_solve(problem: &Problem, params: &ApgParams, weights: &PenaltyWeights, v0: &DecisionVars) -> Result<Solution> {
    params.validate()?;
    if !(weights.varsigma > 1.0) || !(weights.rho_pen > 0.0) {
        return Err(Error::Config("penalty multiplier must be positive and varsigma > 1".into()));
    }
    if v0.dim() != problem.stats.beta.dim() {
        return Err(Error::Input("initial point shape does not match the channel statistics".into()));
    }
    let zeta = params.zeta;
    let mut w = *weights;
    let start = problem.project(v0);
    let mut v = start.clone();
    let mut trace = Vec::new();
    let mut lipschitz = Vec::new();
    let mut inner_total = 0;
    let mut best: Option<(DecisionVars, Evaluation, PenaltyWeights)> = None;

    for outer in 0..params.max_outer {
        let need_estimate = params.step_v.is_none() || params.step_vbar.is_none();
        let j = if need_estimate {
            estimate_lipschitz(problem, &w, &v, params.lipschitz_samples, params.lipschitz_safety, rng::mix(params.seed, outer as u64))
        } else {
            f64::NAN
        };
        lipschitz.push(j);
        let mut alpha_v = params.step_v.unwrap_or(1.0 / j);
        let mut alpha_bar = params.step_vbar.unwrap_or(1.0 / j);

        let e0 = evaluate(&v, problem, &w);
        let mut st = OptimizerState::new(v.clone(), e0.f);
        let mut history = vec![e0.f];
        let mut last_eval = e0;

        for iteration in 1..=params.max_inner {
            let v_bar = st.extrapolate().clone();
            let g_bar = gradient(&v_bar, problem, &w);
            let v_tilde = problem.project(&v_bar.add_scaled(-alpha_bar, &g_bar));
            let e_tilde = evaluate(&v_tilde, problem, &w);
            if !e_tilde.f.is_finite() {
                return Err(Error::NonFinite { outer, iteration, value: e_tilde.f });
            }
            let c_before = st.c;
            let (v_next, e_next, kind) = if e_tilde.f <= c_before - zeta * v_tilde.dist_sq(&v_bar) {
                (v_tilde.clone(), e_tilde, StepKind::Accelerated)
            } else {
                let g = gradient(&st.v, problem, &w);
                let (v_hat, e_hat) = correction_step(problem, &w, &st.v, st.f, &g, &mut alpha_v);
                alpha_bar = alpha_bar.min(alpha_v);
                if e_tilde.f <= e_hat.f {
                    (v_tilde.clone(), e_tilde, StepKind::FallbackAccelerated)
                } else {
                    (v_hat, e_hat, StepKind::Correction)
                }
            };
            trace.push(TraceRow {
                outer,
                iteration,
                rho_pen: w.rho_pen,
                f: e_next.f,
                rate_e: e_next.rate_e,
                psi1: e_next.psi.qos,
                psi2: e_next.psi.binary,
                psi3: e_next.psi.association,
                step: kind,
                c_before,
                step_size: if kind == StepKind::Correction { alpha_v } else { alpha_bar },
            });
            history.push(e_next.f);
            st.advance(v_next, v_tilde, e_next.f, zeta);
            last_eval = e_next;
            inner_total += 1;

            // Relative change over the window; the second stopping test of the
            // original method depends on an undefined quantity and is omitted.
            if history.len() > params.window {
                let now = history[history.len() - 1];
                let then = history[history.len() - 1 - params.window];
                if (now - then).abs() <= params.eps * now.abs().max(1e-12) {
                    break;
                }
            }
            alpha_v *= params.step_growth;
            alpha_bar *= params.step_growth;
        }

        v = st.v;
        let feasible = last_eval.psi.total() <= params.penalty_tol;
        let better = best.as_ref().map_or(true, |(_, e, _)| last_eval.psi.total() <= e.psi.total());
        if better {
            best = Some((v.clone(), last_eval.clone(), w));
        }
        if feasible {
            return Ok(Solution {
                vars: v,
                eval: last_eval,
                weights: w,
                outer_iterations: outer + 1,
                inner_iterations: inner_total,
                converged: true,
                lipschitz,
                trace,
            });
        }
        if outer + 1 < params.max_outer {
            w.rho_pen *= w.varsigma;
            revive_starved_users(&mut v, &start, &last_eval, problem);
        }
    }

    let (vars, eval, weights) = best.expect("at least one outer iteration");
    Ok(Solution { vars, eval, weights, outer_iterations: params.max_outer, inner_iterations: inner_total, converged: false, lipschitz, trace })
}

/// A user whose power column is entirely zero has zero QoS-penalty gradient
/// (its signal is quadratic in its own power), so no penalty weight can bring
/// it back. Such columns are restored from the starting point.
fn revive_starved_users(v: &mut DecisionVars, start: &DecisionVars, eval: &Evaluation, problem: &Problem) {
    let mut changed = false;
    for (k, &rate) in eval.rates.iter().enumerate() {
        if rate < problem.rate_threshold && v.theta.column(k).iter().all(|&t| t == 0.0) {
            v.theta.column_mut(k).assign(&start.theta.column(k));
            changed = true;
        }
    }
    if changed {
        *v = problem.project(v);
    }
}

/// Projected gradient step from `v` with backtracking until the quadratic
/// upper bound holds, which guarantees `f(v_hat) <= f(v)`.
fn correction_step(problem: &Problem, w: &PenaltyWeights, v: &DecisionVars, f_v: f64, g: &DecisionVars, alpha: &mut f64) -> (DecisionVars, Evaluation) {
    for _ in 0..MAX_BACKTRACKS {
        let v_hat = problem.project(&v.add_scaled(-*alpha, g));
        let e_hat = evaluate(&v_hat, problem, w);
        let d = v_hat.sub(v);
        let bound = f_v + g.dot(&d) + d.norm_sq() / (2.0 * *alpha);
        if e_hat.f.is_finite() && e_hat.f <= bound && e_hat.f <= f_v {
            return (v_hat, e_hat);
        }
        *alpha *= 0.5;
    }
    (v.clone(), evaluate(v, problem, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{estimate_gains, ChannelStats, GroupingRule};
    use crate::scenario::{generate_scenario, NetworkConfig};

    fn stats(seed: u64, aps: usize, users: usize) -> ChannelStats {
        let cfg = NetworkConfig { aps, users, antennas: 4, seed, ..NetworkConfig::default() };
        estimate_gains(&generate_scenario(&cfg).unwrap(), 0, &GroupingRule::default()).unwrap()
    }

    #[test]
    fn q_sequence() {
        let v = DecisionVars::zeros(1, 1);
        let mut st = OptimizerState::new(v.clone(), 1.0);
        assert_eq!((st.q_prev, st.q), (0.0, 1.0));
        st.advance(v.clone(), v.clone(), 1.0, 0.5);
        assert!((st.q - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
        assert_eq!(st.q_prev, 1.0);
    }

    #[test]
    fn first_extrapolation_is_the_start() {
        let mut v = DecisionVars::zeros(2, 2);
        v.theta.fill(0.3);
        let mut st = OptimizerState::new(v.clone(), 0.0);
        assert_eq!(st.extrapolate(), &v);
    }

    #[test]
    fn monotone_limit_of_the_reference_sequence() {
        let v = DecisionVars::zeros(1, 1);
        let mut st = OptimizerState::new(v.clone(), 5.0);
        for f in [4.0, 4.5, 3.0] {
            st.advance(v.clone(), v.clone(), f, 0.0);
            assert_eq!(st.b, 1.0);
            assert_eq!(st.c, f);
        }
    }

    #[test]
    fn reference_is_weighted_average() {
        let v = DecisionVars::zeros(1, 1);
        let zeta = 0.5;
        let fs = [3.0, 2.0, 2.5, 1.0];
        let mut st = OptimizerState::new(v.clone(), fs[0]);
        for &f in &fs[1..] {
            st.advance(v.clone(), v.clone(), f, zeta);
        }
        let kappa = fs.len();
        let num: f64 = fs.iter().enumerate().map(|(i, f)| zeta.powi((kappa - 1 - i) as i32) * f).sum();
        let den: f64 = (0..kappa).map(|i| zeta.powi((kappa - 1 - i) as i32)).sum();
        assert!((st.c - num / den).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_params() {
        let st = stats(1, 6, 2);
        let p = Problem::joint(&st, 0.2);
        let v = DecisionVars::initial(6, 2);
        let bad = ApgParams { zeta: 1.0, ..Default::default() };
        assert!(apg_solve(&p, &bad, &PenaltyWeights::default(), &v).is_err());
        let w = PenaltyWeights { varsigma: 1.0, ..Default::default() };
        assert!(apg_solve(&p, &ApgParams::default(), &w, &v).is_err());
    }

    #[test]
    fn solve_reduces_eve_rate_and_stays_feasible() {
        let st = stats(3, 12, 3);
        let p = Problem::joint(&st, 0.2);
        let v0 = DecisionVars::initial(12, 3);
        let start = evaluate(&v0, &p, &PenaltyWeights::default());
        let sol = apg_solve(&p, &ApgParams { max_inner: 500, ..Default::default() }, &PenaltyWeights::default(), &v0).unwrap();
        assert!(sol.eval.rate_e < start.rate_e);
        for row in sol.vars.theta.rows() {
            assert!(row.iter().all(|&x| x >= 0.0));
            assert!(row.iter().map(|x| x * x).sum::<f64>() <= 1.0 + 1e-12);
        }
        assert!(sol.vars.z.iter().all(|&z| (0.0..=1.0).contains(&z)));
        assert!(!sol.trace.is_empty());
    }

    #[test]
    fn monotone_when_zeta_is_zero() {
        let st = stats(4, 10, 3);
        let p = Problem::joint(&st, 0.2);
        let params = ApgParams { zeta: 0.0, max_inner: 300, max_outer: 3, ..Default::default() };
        let sol = apg_solve(&p, &params, &PenaltyWeights::default(), &DecisionVars::initial(10, 3)).unwrap();
        for pair in sol.trace.windows(2) {
            if pair[0].outer == pair[1].outer {
                assert!(pair[1].f <= pair[0].f, "{:?} -> {:?}", pair[0], pair[1]);
            }
        }
    }

    #[test]
    fn trace_csv_shape() {
        let st = stats(5, 6, 2);
        let p = Problem::joint(&st, 0.2);
        let sol = apg_solve(&p, &ApgParams { max_inner: 20, max_outer: 1, ..Default::default() }, &PenaltyWeights::default(), &DecisionVars::initial(6, 2)).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&sol.trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), sol.trace.len() + 1);
        assert!(text.lines().nth(1).unwrap().split(',').count() == 11);
    }
}
