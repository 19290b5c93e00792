//! Paired Monte-Carlo campaigns over large-scale realizations.
//!
//! Every scheme at a given realization sees the same scenario and channel
//! statistics, and the random association shared by the two baselines comes
//! from the same stream, so per-realization differences come from the scheme
//! alone.

use std::fmt;
use std::io::Write;

use ndarray::Array2;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{estimate_gains, secrecy_from_sinr, ChannelStats, GroupingRule};
use crate::format::{round9, sig9};
use crate::optimizer::{apg_solve, round_and_polish, ApgParams, DecisionVars, PenaltyWeights, Problem};
use crate::rng::{self, Purpose};
use crate::scenario::{generate_scenario, NetworkConfig, Scenario};
use crate::{Error, Result};

/// The user targeted by the pilot attack.
pub const ATTACKED_USER: usize = 0;
/// Slack on the rate threshold used by the QoS audit.
pub const QOS_AUDIT_SLACK: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    #[serde(rename = "EPA_RANDOM")]
    EpaRandom,
    #[serde(rename = "OPA_RANDOM")]
    OpaRandom,
    #[serde(rename = "JOINT")]
    Joint,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::EpaRandom, SchemeKind::OpaRandom, SchemeKind::Joint];

    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::EpaRandom => "EPA_RANDOM",
            SchemeKind::OpaRandom => "OPA_RANDOM",
            SchemeKind::Joint => "JOINT",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    /// Fraction of APs randomly assigned to each user by the baselines.
    #[serde(default = "default_ap_fraction")]
    pub ap_fraction: f64,
}

fn default_ap_fraction() -> f64 {
    0.2
}

impl SchemeSpec {
    pub fn new(kind: SchemeKind) -> Self {
        Self { kind, ap_fraction: default_ap_fraction() }
    }

    pub fn all() -> Vec<SchemeSpec> {
        SchemeKind::ALL.iter().map(|&k| SchemeSpec::new(k)).collect()
    }
}

/// Solver settings shared by the optimizing schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub apg: ApgParams,
    pub penalty: PenaltyWeights,
    pub grouping_threshold: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { apg: ApgParams::default(), penalty: PenaltyWeights::default(), grouping_threshold: GroupingRule::default().threshold }
    }
}

impl OptimizerConfig {
    pub fn grouping(&self) -> GroupingRule {
        GroupingRule { threshold: self.grouping_threshold }
    }
}

/// Everything a campaign needs except the realization count.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub network: NetworkConfig,
    pub schemes: Vec<SchemeSpec>,
    pub optimizer: OptimizerConfig,
}

impl Campaign {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.optimizer.apg.validate()?;
        if self.schemes.is_empty() {
            return Err(Error::Config("at least one scheme is required".into()));
        }
        for s in &self.schemes {
            if !(s.ap_fraction > 0.0 && s.ap_fraction <= 1.0) {
                return Err(Error::Config(format!("ap_fraction must lie in (0, 1], got {}", s.ap_fraction)));
            }
        }
        let g = self.optimizer.grouping_threshold;
        if !(g >= 0.0 && g.is_finite()) {
            return Err(Error::Config("grouping_threshold must be non-negative".into()));
        }
        let w = &self.optimizer.penalty;
        if !(w.rho_pen > 0.0 && w.varsigma > 1.0 && w.mu1 >= 0.0 && w.mu2 >= 0.0 && w.mu3 >= 0.0) {
            return Err(Error::Config("penalty weights must be non-negative, rho_pen > 0 and varsigma > 1".into()));
        }
        Ok(())
    }
}

/// Result of one scheme on one realization.
#[derive(Debug, Clone)]
pub struct SchemeOutcome {
    pub kind: SchemeKind,
    pub theta: Array2<f64>,
    pub assoc: Array2<bool>,
    pub sse: f64,
    /// Per-user rates; the attacked user is index 0.
    pub rates: Vec<f64>,
    pub rate_e: f64,
    /// False when the optimizer stopped with penalties above tolerance.
    pub converged: bool,
    /// Largest `|z^2 - round(z^2)|` of the relaxed joint solution.
    pub z_gap: Option<f64>,
    /// Eavesdropper rate of the relaxed joint solution before rounding.
    pub relaxed_rate_e: Option<f64>,
}

impl SchemeOutcome {
    pub fn min_rate(&self) -> f64 {
        self.rates.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn qos_ok(&self, rate_threshold: f64) -> bool {
        self.min_rate() >= rate_threshold - QOS_AUDIT_SLACK
    }

    fn from_theta(kind: SchemeKind, stats: &ChannelStats, theta: Array2<f64>, assoc: Array2<bool>, converged: bool) -> Self {
        let rates = stats.user_rates(theta.view());
        let eve = stats.eve_terms(theta.view()).sinr();
        let user = stats.user_terms(theta.view(), stats.attacked).sinr();
        let rate_e = (1.0 + eve).log2();
        Self { kind, sse: secrecy_from_sinr(user, eve), theta, assoc, rates, rate_e, converged, z_gap: None, relaxed_rate_e: None }
    }
}

/// Each user is served by `ceil(eta * L)` distinct APs drawn uniformly.
pub fn random_association(aps: usize, users: usize, ap_fraction: f64, seed: u64) -> Array2<bool> {
    let per_user = ((ap_fraction * aps as f64).ceil() as usize).clamp(1, aps);
    let mut a = Array2::from_elem((aps, users), false);
    for k in 0..users {
        let mut rng = rng::stream(seed, Purpose::Association, k as u64);
        for l in sample(&mut rng, aps, per_user) {
            a[[l, k]] = true;
        }
    }
    a
}

/// Equal split of each AP's budget over the users it serves.
pub fn equal_power(assoc: &Array2<bool>) -> Array2<f64> {
    let mut theta = Array2::zeros(assoc.dim());
    for (l, row) in assoc.rows().into_iter().enumerate() {
        let served = row.iter().filter(|&&a| a).count();
        if served > 0 {
            let p = 1.0 / (served as f64).sqrt();
            for (k, &a) in row.iter().enumerate() {
                if a {
                    theta[[l, k]] = p;
                }
            }
        }
    }
    theta
}

/// Runs one scheme on one realization. `seed` drives the random association.
pub fn run_scheme(scn: &Scenario, stats: &ChannelStats, spec: &SchemeSpec, optimizer: &OptimizerConfig, rate_threshold: f64, seed: u64) -> Result<SchemeOutcome> {
    let (aps, users) = (scn.num_aps(), scn.num_users());
    match spec.kind {
        SchemeKind::EpaRandom => {
            let assoc = random_association(aps, users, spec.ap_fraction, seed);
            Ok(SchemeOutcome::from_theta(spec.kind, stats, equal_power(&assoc), assoc, true))
        }
        SchemeKind::OpaRandom => {
            let assoc = random_association(aps, users, spec.ap_fraction, seed);
            let v0 = DecisionVars::new(equal_power(&assoc), assoc.mapv(|a| if a { 1.0 } else { 0.0 }));
            let problem = Problem::power_only(stats, rate_threshold, assoc.clone());
            let sol = apg_solve(&problem, &optimizer.apg, &optimizer.penalty, &v0)?;
            Ok(SchemeOutcome::from_theta(spec.kind, stats, sol.vars.theta, assoc, sol.converged))
        }
        SchemeKind::Joint => {
            let problem = Problem::joint(stats, rate_threshold);
            let sol = apg_solve(&problem, &optimizer.apg, &optimizer.penalty, &DecisionVars::initial(aps, users))?;
            let z_gap = sol.vars.z.iter().map(|z| (z * z - (z * z).round()).abs()).fold(0.0, f64::max);
            let polished = round_and_polish(&sol.vars, stats, rate_threshold, &optimizer.apg, &sol.weights)?;
            let mut out = SchemeOutcome::from_theta(spec.kind, stats, polished.theta, polished.assoc, sol.converged);
            out.z_gap = Some(z_gap);
            out.relaxed_rate_e = Some(sol.eval.rate_e);
            Ok(out)
        }
    }
}

/// All schemes on one realization.
#[derive(Debug, Clone)]
pub struct RealizationResult {
    pub index: usize,
    pub seed: u64,
    pub outcomes: Vec<SchemeOutcome>,
}

pub fn realization_seed(campaign_seed: u64, index: usize) -> u64 {
    rng::mix(campaign_seed, index as u64)
}

pub fn run_realization(campaign: &Campaign, index: usize) -> Result<RealizationResult> {
    let seed = realization_seed(campaign.network.seed, index);
    let net = NetworkConfig { seed, ..campaign.network.clone() };
    let scn = generate_scenario(&net)?;
    let stats = estimate_gains(&scn, ATTACKED_USER, &campaign.optimizer.grouping())?;
    let outcomes = campaign
        .schemes
        .iter()
        .map(|s| run_scheme(&scn, &stats, s, &campaign.optimizer, net.rate_threshold, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(RealizationResult { index, seed, outcomes })
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub eve_radius_m: f64,
    pub rate_threshold: f64,
    pub schemes: Vec<SchemeKind>,
    pub realizations: Vec<RealizationResult>,
}

/// Runs `n` realizations on `threads` workers (0 uses rayon's default).
/// Results come back in realization order whatever the thread count.
pub fn run_campaign(campaign: &Campaign, n: usize, threads: usize) -> Result<ExperimentResult> {
    campaign.validate()?;
    if n == 0 {
        return Err(Error::Config("realizations must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let realizations = pool.install(|| (0..n).into_par_iter().map(|i| run_realization(campaign, i)).collect::<Result<Vec<_>>>())?;
    Ok(ExperimentResult {
        eve_radius_m: campaign.network.eve_radius_m,
        rate_threshold: campaign.network.rate_threshold,
        schemes: campaign.schemes.iter().map(|s| s.kind).collect(),
        realizations,
    })
}

impl ExperimentResult {
    /// SSE samples of one scheme in realization order.
    pub fn sse_samples(&self, kind: SchemeKind) -> Vec<f64> {
        self.outcomes(kind).map(|o| o.sse).collect()
    }

    pub fn outcomes(&self, kind: SchemeKind) -> impl Iterator<Item = &SchemeOutcome> {
        self.realizations.iter().flat_map(move |r| r.outcomes.iter().filter(move |o| o.kind == kind))
    }

    /// Fraction of realizations with `min_k R_k >= R_th - 0.01`.
    pub fn qos_fraction(&self, kind: SchemeKind) -> f64 {
        let (ok, n) = self.outcomes(kind).fold((0, 0), |(ok, n), o| (ok + o.qos_ok(self.rate_threshold) as usize, n + 1));
        ok as f64 / n.max(1) as f64
    }

    pub fn summary(&self) -> Vec<SchemeSummary> {
        let epa = self.schemes.contains(&SchemeKind::EpaRandom).then(|| median(&self.sse_samples(SchemeKind::EpaRandom)).ok()).flatten();
        self.schemes
            .iter()
            .map(|&kind| {
                let s = self.sse_samples(kind);
                let (mean, se) = mean_se(&s);
                let med = median(&s).unwrap_or(f64::NAN);
                SchemeSummary {
                    scheme: kind,
                    realizations: s.len(),
                    median_sse: round9(med),
                    mean_sse: round9(mean),
                    se_sse: round9(se),
                    gain_over_epa_pct: epa.filter(|&e| e > 0.0).map(|e| round9(100.0 * (med - e) / e)),
                    qos_fraction: round9(self.qos_fraction(kind)),
                    unconverged: self.outcomes(kind).filter(|o| !o.converged).count(),
                }
            })
            .collect()
    }

    pub const CSV_HEADER: &'static str = "realization,seed,scheme,eve_radius_m,sse,rate_user,rate_e,min_rate,qos_ok,converged";

    /// One row per realization per scheme.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.realizations {
            for o in &r.outcomes {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.index,
                    r.seed,
                    o.kind,
                    sig9(self.eve_radius_m),
                    sig9(o.sse),
                    sig9(o.rates[ATTACKED_USER]),
                    sig9(o.rate_e),
                    sig9(o.min_rate()),
                    o.qos_ok(self.rate_threshold) as u8,
                    o.converged as u8
                )?;
            }
        }
        Ok(())
    }

    /// Empirical CDF of each scheme's SSE.
    pub fn write_cdf_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "scheme,sse,probability")?;
        for &kind in &self.schemes {
            for (x, p) in cdf(&self.sse_samples(kind)).unwrap_or_default() {
                writeln!(out, "{},{},{}", kind, sig9(x), sig9(p))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeSummary {
    pub scheme: SchemeKind,
    pub realizations: usize,
    pub median_sse: f64,
    pub mean_sse: f64,
    pub se_sse: f64,
    /// Median-SSE gain over EPA_RANDOM in percent.
    pub gain_over_epa_pct: Option<f64>,
    pub qos_fraction: f64,
    pub unconverged: usize,
}

/// Empirical CDF: sorted samples paired with `i/n`, `i = 1..=n`.
pub fn cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::Input("cdf of an empty sample".into()));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Input("cdf sample contains NaN".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    Ok(s.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect())
}

/// Smallest sample at which the empirical CDF reaches 0.5.
pub fn median(samples: &[f64]) -> Result<f64> {
    let c = cdf(samples)?;
    Ok(c.iter().find(|(_, p)| *p >= 0.5).expect("last probability is 1").0)
}

/// Sample mean and standard error of the mean.
pub fn mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub eve_radius_m: f64,
    pub scheme: SchemeKind,
    pub realizations: usize,
    pub mean_sse: f64,
    pub se_sse: f64,
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub points: Vec<SweepPoint>,
    pub results: Vec<ExperimentResult>,
}

impl Sweep {
    pub const CSV_HEADER: &'static str = "eve_radius_m,scheme,realizations,mean_sse,se_sse";

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for p in &self.points {
            writeln!(out, "{},{},{},{},{}", sig9(p.eve_radius_m), p.scheme, p.realizations, sig9(p.mean_sse), sig9(p.se_sse))?;
        }
        Ok(())
    }

    pub fn point(&self, eve_radius_m: f64, scheme: SchemeKind) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.eve_radius_m == eve_radius_m && p.scheme == scheme)
    }
}

/// Average SSE per scheme at each eavesdropper radius. The same realization
/// seeds are reused at every radius, so only the eavesdropper's distance
/// changes between points.
pub fn sweep_re(campaign: &Campaign, eve_radii_m: &[f64], n: usize, threads: usize) -> Result<Sweep> {
    if eve_radii_m.is_empty() {
        return Err(Error::Config("eve_radii_m must not be empty".into()));
    }
    if let Some(r) = eve_radii_m.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::Config(format!("eve radii must be positive, got {r}")));
    }
    let mut points = Vec::new();
    let mut results = Vec::new();
    for &r in eve_radii_m {
        let c = Campaign { network: NetworkConfig { eve_radius_m: r, ..campaign.network.clone() }, ..campaign.clone() };
        let res = run_campaign(&c, n, threads)?;
        for &kind in &res.schemes {
            let (mean, se) = mean_se(&res.sse_samples(kind));
            points.push(SweepPoint { eve_radius_m: r, scheme: kind, realizations: n, mean_sse: mean, se_sse: se });
        }
        results.push(res);
    }
    Ok(Sweep { points, results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny() -> Campaign {
        Campaign {
            network: NetworkConfig { aps: 8, users: 3, antennas: 4, side_m: 400.0, eve_radius_m: 50.0, ..NetworkConfig::default() },
            schemes: SchemeSpec::all(),
            optimizer: OptimizerConfig { apg: ApgParams { max_inner: 200, max_outer: 3, ..Default::default() }, ..Default::default() },
        }
    }

    #[test]
    fn cdf_of_constant_jumps_at_once() {
        let c = cdf(&[0.0, 0.0, 0.0]).unwrap();
        assert!(c.iter().all(|&(x, _)| x == 0.0));
        assert_eq!(c.last().unwrap().1, 1.0);
    }

    #[test]
    fn median_of_three() {
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
    }

    #[test]
    fn cdf_rejects_empty() {
        assert!(cdf(&[]).is_err());
    }

    #[test]
    fn full_association_gives_uniform_power() {
        let a = random_association(6, 4, 1.0, 3);
        assert!(a.iter().all(|&x| x));
        assert!(equal_power(&a).iter().all(|&t| (t - 0.5).abs() < 1e-15));
    }

    #[test]
    fn association_size() {
        let a = random_association(40, 8, 0.2, 9);
        for col in a.columns() {
            assert_eq!(col.iter().filter(|&&x| x).count(), 8);
        }
        let tiny = random_association(3, 2, 0.01, 9);
        for col in tiny.columns() {
            assert_eq!(col.iter().filter(|&&x| x).count(), 1);
        }
    }

    #[test]
    fn equal_power_fills_serving_aps() {
        let a = random_association(10, 5, 0.4, 1);
        let t = equal_power(&a);
        for (row, arow) in t.rows().into_iter().zip(a.rows()) {
            let p: f64 = row.iter().map(|x| x * x).sum();
            if arow.iter().any(|&x| x) {
                assert!((p - 1.0).abs() < 1e-12);
            } else {
                assert_eq!(p, 0.0);
            }
        }
    }

    #[test]
    fn campaign_is_paired_and_ordered() {
        let res = run_campaign(&tiny(), 3, 2).unwrap();
        assert_eq!(res.realizations.len(), 3);
        for (i, r) in res.realizations.iter().enumerate() {
            assert_eq!(r.index, i);
            assert_eq!(r.outcomes.len(), 3);
            assert_eq!(r.outcomes[0].assoc, r.outcomes[1].assoc);
        }
        for kind in SchemeKind::ALL {
            assert_eq!(res.sse_samples(kind).len(), 3);
        }
    }

    #[test]
    fn single_realization_is_deterministic() {
        let a = run_campaign(&tiny(), 1, 1).unwrap();
        let b = run_campaign(&tiny(), 1, 1).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn sweep_has_one_point_per_scheme_and_radius() {
        let s = sweep_re(&tiny(), &[50.0, 100.0], 1, 1).unwrap();
        assert_eq!(s.points.len(), 6);
        assert!(sweep_re(&tiny(), &[0.0], 1, 1).is_err());
    }

    proptest! {
        #[test]
        fn cdf_is_monotone_and_mergeable(a in prop::collection::vec(-5.0..5.0f64, 1..40), b in prop::collection::vec(-5.0..5.0f64, 1..40)) {
            let c = cdf(&a).unwrap();
            for w in c.windows(2) {
                prop_assert!(w[0].0 <= w[1].0 && w[0].1 < w[1].1);
            }
            let eval = |c: &[(f64, f64)], x: f64| c.iter().filter(|(v, _)| *v <= x).map(|(_, p)| *p).fold(0.0, f64::max);
            let mut all = a.clone();
            all.extend(&b);
            let cm = cdf(&all).unwrap();
            let cb = cdf(&b).unwrap();
            let (na, nb) = (a.len() as f64, b.len() as f64);
            for &x in all.iter() {
                let merged = (na * eval(&c, x) + nb * eval(&cb, x)) / (na + nb);
                prop_assert!((eval(&cm, x) - merged).abs() < 1e-12);
            }
        }
    }
}
