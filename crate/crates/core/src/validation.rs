//! Self-checks behind `cfsec validate`: analytic gradient against finite
//! differences, projection against an exhaustive active-set search, and (with
//! the `montecarlo` feature) closed-form SINRs against simulated ones.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;
use serde::Serialize;

use crate::channel::{estimate_gains, ChannelStats, GroupingRule};
use crate::optimizer::{gradient, objective, project, DecisionVars, PenaltyWeights, Problem};
use crate::rng::{self, Purpose};
use crate::scenario::{generate_scenario, NetworkConfig};
use crate::Result;

pub const GRADIENT_TOL: f64 = 1e-5;
pub const FD_STEP: f64 = 1e-6;
pub const PROJECTION_TOL: f64 = 1e-8;
pub const SINR_REL_TOL: f64 = 0.05;
pub const SINR_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: &'static str,
    pub status: Status,
    /// Worst measured error.
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Inconclusive => "INCONCLUSIVE",
        };
        write!(f, "{tag} {}: max error {:.3e} (tolerance {:.1e}); {}", self.name, self.measured, self.tolerance, self.detail)
    }
}

fn stats_for(aps: usize, users: usize, antennas: usize, seed: u64) -> Result<ChannelStats> {
    let cfg = NetworkConfig { aps, users, antennas, seed, ..NetworkConfig::default() };
    estimate_gains(&generate_scenario(&cfg)?, 0, &GroupingRule::default())
}

/// A uniformly random point of the convex feasible set.
pub fn random_feasible(aps: usize, users: usize, rng: &mut rng::Rng) -> DecisionVars {
    let mut v = DecisionVars::zeros(aps, users);
    for mut row in v.theta.rows_mut() {
        row.mapv_inplace(|_| rng.random::<f64>());
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        let radius = rng.random::<f64>().powf(1.0 / users as f64);
        row.mapv_inplace(|x| x * radius / norm.max(1e-300));
    }
    v.z.mapv_inplace(|_| rng.random::<f64>());
    v
}

/// Central-difference gradient of the penalized objective.
pub fn finite_difference(v: &DecisionVars, problem: &Problem, w: &PenaltyWeights, h: f64) -> DecisionVars {
    let (l, k) = v.dim();
    let x = v.to_vec();
    let g: Vec<f64> = (0..x.len())
        .map(|i| {
            let mut p = x.clone();
            let mut m = x.clone();
            p[i] += h;
            m[i] -= h;
            let fp = objective(&DecisionVars::from_vec(l, k, &p), problem, w);
            let fm = objective(&DecisionVars::from_vec(l, k, &m), problem, w);
            (fp - fm) / (2.0 * h)
        })
        .collect();
    DecisionVars::from_vec(l, k, &g)
}

/// Relative error `||g - fd||_inf / ||g||_inf` at `points` random feasible
/// points (L=10, K=4, M=4).
pub fn check_gradient(seed: u64, points: usize) -> Result<CheckReport> {
    let stats = stats_for(10, 4, 4, seed)?;
    let problem = Problem::joint(&stats, 0.2);
    let w = PenaltyWeights::default();
    let mut rng = rng::stream(seed, Purpose::Validation, 1);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let v = random_feasible(10, 4, &mut rng);
        let g = gradient(&v, &problem, &w).to_vec();
        let fd = finite_difference(&v, &problem, &w, FD_STEP).to_vec();
        let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-12);
        let err = g.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(err / scale);
    }
    let status = if worst < GRADIENT_TOL { Status::Pass } else { Status::Fail };
    Ok(CheckReport { name: "gradient", status, measured: worst, tolerance: GRADIENT_TOL, detail: format!("{points} points, central differences h={FD_STEP:e}") })
}

/// Nearest point of `{x >= 0, ||x|| <= 1}` by enumerating every support set
/// with the ball constraint inactive or active and keeping the closest
/// candidate that satisfies all constraints.
pub fn exhaustive_ball_orthant(r: ArrayView1<f64>) -> Array1<f64> {
    let n = r.len();
    let mut best = Array1::zeros(n);
    let mut best_d = r.iter().map(|x| x * x).sum::<f64>();
    for mask in 1u32..(1 << n) {
        let support = |i: usize| mask & (1 << i) != 0;
        let free_norm = (0..n).filter(|&i| support(i)).map(|i| r[i] * r[i]).sum::<f64>().sqrt();
        for active in [false, true] {
            if active && free_norm < 1.0 {
                continue;
            }
            let scale = if active { 1.0 / free_norm } else { 1.0 };
            let x = Array1::from_shape_fn(n, |i| if support(i) { r[i] * scale } else { 0.0 });
            let norm_sq = x.iter().map(|v| v * v).sum::<f64>();
            if x.iter().any(|&v| v < 0.0) || norm_sq > 1.0 + 1e-12 {
                continue;
            }
            let d = x.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            if d < best_d {
                best_d = d;
                best = x;
            }
        }
    }
    best
}

/// Projection of random 20-dimensional points (L=2, K=5) against the
/// exhaustive oracle.
pub fn check_projection(seed: u64, instances: usize) -> Result<CheckReport> {
    let mut rng = rng::stream(seed, Purpose::Validation, 2);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let spread = 0.1 + 3.0 * rng.random::<f64>();
        let theta = Array2::from_shape_fn((2, 5), |_| spread * (2.0 * rng.random::<f64>() - 1.0));
        let z = Array2::from_shape_fn((2, 5), |_| 3.0 * rng.random::<f64>() - 1.0);
        let v = DecisionVars::new(theta, z);
        let p = project(&v);
        let mut oracle = v.clone();
        for (mut row, src) in oracle.theta.rows_mut().into_iter().zip(v.theta.rows()) {
            row.assign(&exhaustive_ball_orthant(src));
        }
        oracle.z.mapv_inplace(|x| [0.0, x, 1.0].into_iter().filter(|c| (0.0..=1.0).contains(c)).min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs())).unwrap());
        worst = worst.max(p.dist_sq(&oracle).sqrt());
    }
    let status = if worst <= PROJECTION_TOL { Status::Pass } else { Status::Fail };
    Ok(CheckReport { name: "projection", status, measured: worst, tolerance: PROJECTION_TOL, detail: format!("{instances} instances of dimension 20") })
}

/// Closed-form user and eavesdropper SINRs against Monte-Carlo estimates at
/// L=20, K=8, M=8 for `matrices` random power matrices. Each comparison must
/// be within 5% relative error and within three standard errors. Below
/// [`crate::montecarlo::MIN_CONCLUSIVE_DRAWS`] draws the check is reported as
/// inconclusive instead of failing.
#[cfg(feature = "montecarlo")]
pub fn check_sinr(seed: u64, draws: usize, matrices: usize) -> Result<CheckReport> {
    use crate::channel::{sinr_eve, sinr_user, PowerMatrix};
    use crate::montecarlo::{empirical_sinr_many, MIN_CONCLUSIVE_DRAWS};

    let stats = stats_for(20, 8, 8, seed)?;
    let mut rng = rng::stream(seed, Purpose::Validation, 3);
    let thetas = (0..matrices).map(|_| PowerMatrix::new(random_feasible(20, 8, &mut rng).theta)).collect::<Result<Vec<_>>>()?;
    let emp = empirical_sinr_many(&stats, &thetas, draws, rng::mix(seed, 3))?;
    let (mut worst_rel, mut worst_sigma): (f64, f64) = (0.0, 0.0);
    for (th, e) in thetas.iter().zip(&emp) {
        let mut compare = |closed: f64, mc: f64, se: f64| {
            worst_rel = worst_rel.max((closed - mc).abs() / closed.abs().max(1e-300));
            worst_sigma = worst_sigma.max((closed - mc).abs() / se.max(1e-300));
        };
        for k in 0..stats.num_users() {
            compare(sinr_user(&stats, th, k), e.user[k], e.user_se[k]);
        }
        compare(sinr_eve(&stats, th), e.eve, e.eve_se);
    }
    let within = worst_rel <= SINR_REL_TOL && worst_sigma <= SINR_SIGMAS;
    let status = if draws < MIN_CONCLUSIVE_DRAWS {
        Status::Inconclusive
    } else if within {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(CheckReport {
        name: "sinr",
        status,
        measured: worst_rel,
        tolerance: SINR_REL_TOL,
        detail: format!("{matrices} power matrices, {draws} draws, worst deviation {worst_sigma:.2} standard errors"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exhaustive_oracle_examples() {
        let p = exhaustive_ball_orthant(array![3.0, -1.0, 4.0].view());
        assert!((&p - &array![0.6, 0.0, 0.8]).iter().all(|d| d.abs() < 1e-15));
        assert_eq!(exhaustive_ball_orthant(array![0.2, -1.0].view()), array![0.2, 0.0]);
        assert_eq!(exhaustive_ball_orthant(array![-0.2, -1.0].view()), array![0.0, 0.0]);
    }

    #[test]
    fn small_checks_pass() {
        assert_eq!(check_gradient(1, 3).unwrap().status, Status::Pass);
        assert_eq!(check_projection(1, 50).unwrap().status, Status::Pass);
    }

    #[cfg(feature = "montecarlo")]
    #[test]
    fn too_few_draws_is_inconclusive() {
        let r = check_sinr(1, 100, 1).unwrap();
        assert_eq!(r.status, Status::Inconclusive);
    }
}
