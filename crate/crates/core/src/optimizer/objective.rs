//! Penalized objective and its analytic gradient.
//!
//! `f(v) = R_E(theta) + rho * (mu1 * Psi1(theta) + mu2 * Psi2(z) + mu3 * Psi3(theta, z))`
//!
//! * `Psi1 = sum_k max(0, R_th - R_k)^2` (QoS)
//! * `Psi2 = sum_{l,k} z^2 - z^4` (vanishes iff z is binary on [0, 1])
//! * `Psi3 = sum_k max(0, 1 - sum_l z^2)^2 + sum_{l,k} max(0, theta^2 - z^2)^2`
//!
//! In power-only mode the last two terms are dropped.

use std::f64::consts::LN_2;

use ndarray::{Array1, Array2, Zip};

use super::{DecisionVars, Mode, PenaltyWeights, Problem};
use crate::channel::ChannelStats;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Penalties {
    pub qos: f64,
    pub binary: f64,
    pub association: f64,
}

impl Penalties {
    pub fn total(&self) -> f64 {
        self.qos + self.binary + self.association
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub f: f64,
    pub rate_e: f64,
    pub rates: Vec<f64>,
    pub psi: Penalties,
}

impl Evaluation {
    pub fn min_rate(&self) -> f64 {
        self.rates.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn qos_penalty(rates: &[f64], threshold: f64) -> f64 {
    rates.iter().map(|r| (threshold - r).max(0.0).powi(2)).sum()
}

fn binary_penalty(z: &Array2<f64>) -> f64 {
    z.iter().map(|&x| x * x - x.powi(4)).sum()
}

fn association_penalty(theta: &Array2<f64>, z: &Array2<f64>) -> f64 {
    let coverage: f64 = z.columns().into_iter().map(|c| (1.0 - c.iter().map(|x| x * x).sum::<f64>()).max(0.0).powi(2)).sum();
    let coupling = Zip::from(theta).and(z).fold(0.0, |acc, &t, &zz| acc + (t * t - zz * zz).max(0.0).powi(2));
    coverage + coupling
}

/// The three penalty terms at `v`.
pub fn penalties(v: &DecisionVars, stats: &ChannelStats, rate_threshold: f64) -> Penalties {
    let rates = stats.user_rates(v.theta.view());
    Penalties {
        qos: qos_penalty(&rates, rate_threshold),
        binary: binary_penalty(&v.z),
        association: association_penalty(&v.theta, &v.z),
    }
}

/// Objective value together with its parts.
pub fn evaluate(v: &DecisionVars, problem: &Problem, w: &PenaltyWeights) -> Evaluation {
    let stats = problem.stats;
    let rates = stats.user_rates(v.theta.view());
    let rate_e = stats.eve_rate(v.theta.view());
    let qos = qos_penalty(&rates, problem.rate_threshold);
    let psi = match problem.mode {
        Mode::Joint => Penalties { qos, binary: binary_penalty(&v.z), association: association_penalty(&v.theta, &v.z) },
        Mode::PowerOnly { .. } => Penalties { qos, ..Default::default() },
    };
    let f = rate_e + w.rho_pen * (w.mu1 * psi.qos + w.mu2 * psi.binary + w.mu3 * psi.association);
    Evaluation { f, rate_e, rates, psi }
}

pub fn objective(v: &DecisionVars, problem: &Problem, w: &PenaltyWeights) -> f64 {
    evaluate(v, problem, w).f
}

/// Gradient of the eavesdropper rate with respect to theta.
fn eve_rate_gradient(stats: &ChannelStats, theta: &Array2<f64>, ap_power: &Array1<f64>, out: &mut Array2<f64>) {
    let a = stats.attacked;
    let terms = stats.eve_terms_with(theta.view(), ap_power);
    let coh: f64 = stats.eve_coherent.iter().zip(theta.column(a)).map(|(e, t)| e * t).sum();
    let (u, v) = (terms.signal, terms.interference);
    let inv_uv = 1.0 / (u + v);
    let inv_v = 1.0 / v;
    for ((l, t), g) in out.indexed_iter_mut() {
        let th = theta[[l, t]];
        let leak = stats.eve_leak[l];
        *g += if t == a {
            // only the numerator depends on the attacked user's power
            (2.0 * coh * stats.eve_coherent[l] + 2.0 * leak * th) * inv_uv / LN_2
        } else {
            let dv = 2.0 * leak * th;
            (dv * inv_uv - dv * inv_v) / LN_2
        };
    }
}

/// Adds `scale * sum_k weight[k] * dR_k/dtheta` to `out`.
fn weighted_rate_gradient(stats: &ChannelStats, theta: &Array2<f64>, ap_power: &Array1<f64>, weight: &[f64], scale: f64, out: &mut Array2<f64>) {
    let (l_count, k_count) = theta.dim();
    // per user: coherent sum, 1/(U+V), 1/V
    let mut coh = vec![0.0; k_count];
    let mut inv_uv = vec![0.0; k_count];
    let mut inv_v = vec![0.0; k_count];
    for k in 0..k_count {
        if weight[k] == 0.0 {
            continue;
        }
        let t = stats.user_terms_with(theta.view(), ap_power, k);
        coh[k] = stats.coherent.column(k).iter().zip(theta.column(k)).map(|(c, x)| c * x).sum();
        inv_uv[k] = 1.0 / (t.signal + t.interference);
        inv_v[k] = 1.0 / t.interference;
    }
    for l in 0..l_count {
        // sum_k w_k d[l,k] (1/(U_k+V_k) - 1/V_k), shared by every theta[l, .]
        let shared: f64 = (0..k_count).map(|k| weight[k] * stats.leak[[l, k]] * (inv_uv[k] - inv_v[k])).sum();
        for j in 0..k_count {
            let own = weight[j] * 2.0 * coh[j] * stats.coherent[[l, j]] * inv_uv[j];
            out[[l, j]] += scale * (own + 2.0 * theta[[l, j]] * shared) / LN_2;
        }
    }
}

/// Analytic gradient of [`objective`]. `max(0, x)^2` terms contribute
/// `2 max(0, x) x'`.
pub fn gradient(v: &DecisionVars, problem: &Problem, w: &PenaltyWeights) -> DecisionVars {
    let stats = problem.stats;
    let theta = &v.theta;
    let ap_power = ChannelStats::ap_power(theta.view());
    let mut g_theta = Array2::zeros(theta.dim());
    let mut g_z = Array2::zeros(theta.dim());

    eve_rate_gradient(stats, theta, &ap_power, &mut g_theta);

    let rates: Vec<f64> = (0..stats.num_users()).map(|k| stats.user_terms_with(theta.view(), &ap_power, k).rate()).collect();
    let shortfall: Vec<f64> = rates.iter().map(|r| (problem.rate_threshold - r).max(0.0)).collect();
    if shortfall.iter().any(|&s| s > 0.0) {
        // d/dtheta sum_k s_k^2 = sum_k -2 s_k dR_k/dtheta
        weighted_rate_gradient(stats, theta, &ap_power, &shortfall, -2.0 * w.rho_pen * w.mu1, &mut g_theta);
    }

    if let Mode::Joint = problem.mode {
        let rho = w.rho_pen;
        let coverage: Vec<f64> = v.z.columns().into_iter().map(|c| (1.0 - c.iter().map(|x| x * x).sum::<f64>()).max(0.0)).collect();
        Zip::indexed(&mut g_theta).and(&mut g_z).and(theta).and(&v.z).for_each(|(_, k), gt, gz, &t, &z| {
            let excess = (t * t - z * z).max(0.0);
            *gt += rho * w.mu3 * 4.0 * excess * t;
            *gz += rho * (w.mu2 * (2.0 * z - 4.0 * z.powi(3)) - w.mu3 * 4.0 * excess * z - w.mu3 * 4.0 * coverage[k] * z);
        });
    }

    DecisionVars { theta: g_theta, z: g_z }
}
