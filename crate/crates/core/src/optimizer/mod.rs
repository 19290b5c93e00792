//! Joint AP selection and power control.
//!
//! The mixed-integer problem (minimize the eavesdropper rate subject to
//! per-user QoS, per-AP power and at-least-one-AP association) is relaxed with
//! `z[l,k]^2 = a[l,k]`, the QoS/binary/association constraints move into
//! quadratic penalties, and the penalized objective is minimized by a
//! non-monotone accelerated projected gradient (APG) method wrapped in a
//! penalty-continuation loop.

mod apg;
mod objective;
mod polish;
mod projection;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelStats;

pub use apg::{apg_solve, estimate_lipschitz, ApgParams, OptimizerState, Solution, StepKind, TraceRow, write_trace_csv};
pub use objective::{evaluate, gradient, objective, penalties, Evaluation, Penalties};
pub use polish::{round_and_polish, Polished};
pub use projection::{project, project_ball_orthant};

/// Stacked iterate `v = [theta; z]`, both L x K.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVars {
    pub theta: Array2<f64>,
    pub z: Array2<f64>,
}

impl DecisionVars {
    pub fn new(theta: Array2<f64>, z: Array2<f64>) -> Self {
        assert_eq!(theta.dim(), z.dim(), "theta and z must have the same shape");
        Self { theta, z }
    }

    pub fn zeros(aps: usize, users: usize) -> Self {
        Self::new(Array2::zeros((aps, users)), Array2::zeros((aps, users)))
    }

    /// Equal power on every link and every association switched on.
    pub fn initial(aps: usize, users: usize) -> Self {
        Self::new(Array2::from_elem((aps, users), 1.0 / (users as f64).sqrt()), Array2::ones((aps, users)))
    }

    pub fn dim(&self) -> (usize, usize) {
        self.theta.dim()
    }

    /// `self + s * other`
    pub fn add_scaled(&self, s: f64, other: &DecisionVars) -> DecisionVars {
        DecisionVars { theta: &self.theta + &(&other.theta * s), z: &self.z + &(&other.z * s) }
    }

    pub fn sub(&self, other: &DecisionVars) -> DecisionVars {
        self.add_scaled(-1.0, other)
    }

    pub fn dot(&self, other: &DecisionVars) -> f64 {
        let a = Zip::from(&self.theta).and(&other.theta).fold(0.0, |acc, x, y| acc + x * y);
        Zip::from(&self.z).and(&other.z).fold(a, |acc, x, y| acc + x * y)
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn dist_sq(&self, other: &DecisionVars) -> f64 {
        self.sub(other).norm_sq()
    }

    /// Flattened `[theta (row-major); z (row-major)]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.theta.iter().chain(self.z.iter()).copied().collect()
    }

    pub fn from_vec(aps: usize, users: usize, v: &[f64]) -> Self {
        let n = aps * users;
        assert_eq!(v.len(), 2 * n);
        Self::new(
            Array2::from_shape_vec((aps, users), v[..n].to_vec()).unwrap(),
            Array2::from_shape_vec((aps, users), v[n..].to_vec()).unwrap(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyWeights {
    /// QoS penalty weight.
    pub mu1: f64,
    /// Binary-association penalty weight.
    pub mu2: f64,
    /// Association-coupling penalty weight.
    pub mu3: f64,
    /// Current continuation multiplier.
    pub rho_pen: f64,
    /// Growth factor applied to `rho_pen` after each inner solve (> 1).
    pub varsigma: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self { mu1: 1.0, mu2: 1.0, mu3: 1.0, rho_pen: 1.0, varsigma: 10.0 }
    }
}

/// What is being optimized.
#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Power and relaxed association.
    Joint,
    /// Power only, on a fixed association; `z` is frozen, the binary and
    /// coupling penalties are dropped and the projection zeroes links outside
    /// the support.
    PowerOnly { support: Array2<bool> },
}

/// An instance of the penalized problem.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub stats: &'a ChannelStats,
    pub rate_threshold: f64,
    pub mode: Mode,
}

impl<'a> Problem<'a> {
    pub fn joint(stats: &'a ChannelStats, rate_threshold: f64) -> Self {
        Self { stats, rate_threshold, mode: Mode::Joint }
    }

    pub fn power_only(stats: &'a ChannelStats, rate_threshold: f64, support: Array2<bool>) -> Self {
        Self { stats, rate_threshold, mode: Mode::PowerOnly { support } }
    }

    pub fn support(&self) -> Option<&Array2<bool>> {
        match &self.mode {
            Mode::Joint => None,
            Mode::PowerOnly { support } => Some(support),
        }
    }

    pub fn project(&self, r: &DecisionVars) -> DecisionVars {
        match &self.mode {
            Mode::Joint => project(r),
            Mode::PowerOnly { support } => {
                let mut theta = r.theta.clone();
                Zip::from(&mut theta).and(support).for_each(|t, &s| {
                    if !s {
                        *t = 0.0
                    }
                });
                DecisionVars { theta: projection::project_theta(&theta), z: r.z.clone() }
            }
        }
    }
}
