//! Channel estimation under pilot spoofing, protective partial zero-forcing
//! (PPZF) grouping, and the closed-form use-and-then-forget SINRs.
//!
//! Notation used throughout: `l` indexes APs, `k`/`t` index users, and the
//! attacked user is `stats.attacked` (0 by convention). The eavesdropper sends
//! the attacked user's pilot, so the attacked user's estimate is contaminated
//! and the eavesdropper's effective estimate is a scaled copy of it.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::scenario::{to_db, Scenario};
use crate::{Error, Result};

/// Splits users into a zero-forced strong group and a protected weak group.
///
/// A user is strong at AP `l` when its gain is at least `threshold` times the
/// strongest gain at that AP; at most `M - 1` users are kept, strongest first,
/// ties to the lower index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupingRule {
    pub threshold: f64,
}

impl Default for GroupingRule {
    fn default() -> Self {
        Self { threshold: 0.01 }
    }
}

/// Returns `(strong, weak)` user index sets for one AP. Both are sorted ascending.
pub fn group_users(beta_row: ArrayView1<f64>, antennas: usize, rule: &GroupingRule) -> (Vec<usize>, Vec<usize>) {
    let k = beta_row.len();
    let max = beta_row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| beta_row[b].total_cmp(&beta_row[a]).then(a.cmp(&b)));
    let eligible = order.iter().filter(|&&i| beta_row[i] >= rule.threshold * max).count();
    let take = eligible.min(antennas.saturating_sub(1));
    let mut strong: Vec<usize> = order[..take].to_vec();
    strong.sort_unstable();
    let weak = (0..k).filter(|i| !strong.contains(i)).collect();
    (strong, weak)
}

/// Nonnegative power-control coefficients, L x K, with `sum_k theta[l,k]^2 <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerMatrix(Array2<f64>);

impl PowerMatrix {
    pub const POWER_SLACK: f64 = 1e-9;

    pub fn new(theta: Array2<f64>) -> Result<Self> {
        if theta.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Input("power coefficients must be finite and nonnegative".into()));
        }
        for (l, row) in theta.rows().into_iter().enumerate() {
            let p: f64 = row.iter().map(|x| x * x).sum();
            if p > 1.0 + Self::POWER_SLACK {
                return Err(Error::Input(format!("AP {l} exceeds its power budget: {p}")));
            }
        }
        Ok(Self(theta))
    }

    pub fn zeros(aps: usize, users: usize) -> Self {
        Self(Array2::zeros((aps, users)))
    }

    /// Equal power over all users at every AP.
    pub fn equal(aps: usize, users: usize) -> Self {
        Self(Array2::from_elem((aps, users), 1.0 / (users as f64).sqrt()))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Estimation statistics and grouping of one realization, plus the
/// per-link constants the rate expressions need.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    /// MMSE estimation gains, L x K.
    pub gamma: Array2<f64>,
    /// Eavesdropper leakage ratio per AP.
    pub alpha: Array1<f64>,
    /// Eavesdropper estimation gain per AP, `alpha * gamma[., attacked]`.
    pub gamma_e: Array1<f64>,
    pub strong_sets: Vec<Vec<usize>>,
    pub weak_sets: Vec<Vec<usize>>,
    /// `delta[l,k]` is true iff user k is zero-forced at AP l.
    pub delta: Array2<bool>,
    pub zf_count: Vec<usize>,
    pub beta: Array2<f64>,
    pub beta_e: Array1<f64>,
    pub rho_d: f64,
    pub rho_u: f64,
    pub rho_e: f64,
    pub pilot_len: usize,
    pub antennas: usize,
    pub attacked: usize,
    /// `sqrt(rho_d (M - |S_l|) gamma[l,k])`
    pub(crate) coherent: Array2<f64>,
    /// `rho_d (beta[l,k] - delta[l,k] gamma[l,k])`
    pub(crate) leak: Array2<f64>,
    /// `sqrt(rho_d (M - |S_l|) gamma_e[l])`
    pub(crate) eve_coherent: Array1<f64>,
    /// `rho_d (beta_e[l] - delta[l,attacked] gamma_e[l])`
    pub(crate) eve_leak: Array1<f64>,
}

/// Estimation gains and grouping for a realization.
pub fn estimate_gains(scn: &Scenario, attacked: usize, rule: &GroupingRule) -> Result<ChannelStats> {
    let (l_count, k_count) = scn.beta.dim();
    if attacked >= k_count {
        return Err(Error::Input(format!("attacked user {attacked} out of range (K = {k_count})")));
    }
    if scn.antennas < 2 {
        return Err(Error::Input("PPZF needs at least two antennas per AP".into()));
    }
    let tau = scn.pilot_len as f64;
    let (rho_u, rho_e, rho_d) = (scn.rho_u, scn.rho_e, scn.rho_d);

    let gamma = Array2::from_shape_fn((l_count, k_count), |(l, k)| {
        let b = scn.beta[[l, k]];
        let spoof = if k == attacked { tau * rho_e * scn.beta_e[l] } else { 0.0 };
        tau * rho_u * b * b / (tau * rho_u * b + spoof + 1.0)
    });
    let alpha = Array1::from_shape_fn(l_count, |l| {
        let be = scn.beta_e[l];
        let b1 = scn.beta[[l, attacked]];
        rho_e * be * be / (rho_u * b1 * b1)
    });
    let gamma_e = Array1::from_shape_fn(l_count, |l| alpha[l] * gamma[[l, attacked]]);

    let mut strong_sets = Vec::with_capacity(l_count);
    let mut weak_sets = Vec::with_capacity(l_count);
    let mut delta = Array2::from_elem((l_count, k_count), false);
    for l in 0..l_count {
        let (s, w) = group_users(scn.beta.row(l), scn.antennas, rule);
        for &k in &s {
            delta[[l, k]] = true;
        }
        strong_sets.push(s);
        weak_sets.push(w);
    }
    let zf_count: Vec<usize> = strong_sets.iter().map(Vec::len).collect();

    let dof = |l: usize| (scn.antennas - zf_count[l]) as f64;
    let coherent = Array2::from_shape_fn((l_count, k_count), |(l, k)| (rho_d * dof(l) * gamma[[l, k]]).sqrt());
    let leak = Array2::from_shape_fn((l_count, k_count), |(l, k)| {
        let d = if delta[[l, k]] { gamma[[l, k]] } else { 0.0 };
        rho_d * (scn.beta[[l, k]] - d)
    });
    let eve_coherent = Array1::from_shape_fn(l_count, |l| (rho_d * dof(l) * gamma_e[l]).sqrt());
    let eve_leak = Array1::from_shape_fn(l_count, |l| {
        let d = if delta[[l, attacked]] { gamma_e[l] } else { 0.0 };
        rho_d * (scn.beta_e[l] - d)
    });

    Ok(ChannelStats {
        gamma,
        alpha,
        gamma_e,
        strong_sets,
        weak_sets,
        delta,
        zf_count,
        beta: scn.beta.clone(),
        beta_e: scn.beta_e.clone(),
        rho_d,
        rho_u,
        rho_e,
        pilot_len: scn.pilot_len,
        antennas: scn.antennas,
        attacked,
        coherent,
        leak,
        eve_coherent,
        eve_leak,
    })
}

/// Numerator and denominator of an SINR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrTerms {
    pub signal: f64,
    pub interference: f64,
}

impl SinrTerms {
    pub fn sinr(&self) -> f64 {
        self.signal / self.interference
    }

    pub fn rate(&self) -> f64 {
        (1.0 + self.sinr()).log2()
    }
}

impl ChannelStats {
    pub fn num_aps(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.gamma.ncols()
    }

    /// `sum_t theta[l,t]^2` for each AP.
    pub(crate) fn ap_power(theta: ArrayView2<f64>) -> Array1<f64> {
        theta.rows().into_iter().map(|r| r.iter().map(|x| x * x).sum()).collect()
    }

    pub(crate) fn user_terms_with(&self, theta: ArrayView2<f64>, ap_power: &Array1<f64>, k: usize) -> SinrTerms {
        let coh: f64 = self.coherent.column(k).iter().zip(theta.column(k)).map(|(c, t)| c * t).sum();
        let interference: f64 = self.leak.column(k).iter().zip(ap_power).map(|(d, p)| d * p).sum::<f64>() + 1.0;
        SinrTerms { signal: coh * coh, interference }
    }

    pub fn user_terms(&self, theta: ArrayView2<f64>, k: usize) -> SinrTerms {
        self.user_terms_with(theta, &Self::ap_power(theta), k)
    }

    pub(crate) fn eve_terms_with(&self, theta: ArrayView2<f64>, ap_power: &Array1<f64>) -> SinrTerms {
        let a = self.attacked;
        let mut coh = 0.0;
        let mut spill = 0.0;
        let mut interference = 1.0;
        for l in 0..self.num_aps() {
            let t1 = theta[[l, a]];
            coh += self.eve_coherent[l] * t1;
            spill += self.eve_leak[l] * t1 * t1;
            interference += self.eve_leak[l] * (ap_power[l] - t1 * t1);
        }
        SinrTerms { signal: coh * coh + spill, interference }
    }

    pub fn eve_terms(&self, theta: ArrayView2<f64>) -> SinrTerms {
        self.eve_terms_with(theta, &Self::ap_power(theta))
    }

    /// Achievable rates of all users (bits/s/Hz).
    pub fn user_rates(&self, theta: ArrayView2<f64>) -> Vec<f64> {
        let p = Self::ap_power(theta);
        (0..self.num_users()).map(|k| self.user_terms_with(theta, &p, k).rate()).collect()
    }

    pub fn eve_rate(&self, theta: ArrayView2<f64>) -> f64 {
        self.eve_terms(theta).rate()
    }

    pub fn to_record(&self) -> ChannelStatsRecord {
        let table = |a: &Array2<f64>| a.rows().into_iter().map(|r| r.iter().map(|&x| to_db(x)).collect()).collect();
        ChannelStatsRecord {
            attacked: self.attacked,
            antennas: self.antennas,
            pilot_len: self.pilot_len,
            gamma_db: table(&self.gamma),
            gamma_e_db: self.gamma_e.iter().map(|&x| to_db(x)).collect(),
            alpha_db: self.alpha.iter().map(|&x| to_db(x)).collect(),
            strong_sets: self.strong_sets.clone(),
            beta_db: table(&self.beta),
            beta_e_db: self.beta_e.iter().map(|&x| to_db(x)).collect(),
            rho_d_db: to_db(self.rho_d),
        }
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_record())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Dump form of [`ChannelStats`], gains in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelStatsRecord {
    pub attacked: usize,
    pub antennas: usize,
    pub pilot_len: usize,
    pub gamma_db: Vec<Vec<f64>>,
    pub gamma_e_db: Vec<f64>,
    pub alpha_db: Vec<f64>,
    pub strong_sets: Vec<Vec<usize>>,
    pub beta_db: Vec<Vec<f64>>,
    pub beta_e_db: Vec<f64>,
    pub rho_d_db: f64,
}

pub fn sinr_user(stats: &ChannelStats, theta: &PowerMatrix, k: usize) -> f64 {
    stats.user_terms(theta.view(), k).sinr()
}

pub fn sinr_eve(stats: &ChannelStats, theta: &PowerMatrix) -> f64 {
    stats.eve_terms(theta.view()).sinr()
}

/// `[log2((1 + SINR_user) / (1 + SINR_eve))]^+`
pub fn secrecy_from_sinr(user: f64, eve: f64) -> f64 {
    ((1.0 + user) / (1.0 + eve)).log2().max(0.0)
}

/// Secrecy spectral efficiency of the attacked user.
pub fn secrecy_se(stats: &ChannelStats, theta: &PowerMatrix) -> f64 {
    secrecy_from_sinr(sinr_user(stats, theta, stats.attacked), sinr_eve(stats, theta))
}
