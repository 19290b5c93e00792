//! Network realizations: AP/user/eavesdropper placement on a wrapped-around
//! square, distance-based path loss and spatially correlated log-normal
//! shadowing.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Purpose, Rng};
use crate::{Error, Result};

pub type Point = [f64; 2];

/// Shadowing standard deviation (dB).
pub const SHADOWING_STD_DB: f64 = 4.0;
/// Distance at which the shadowing correlation halves (m).
pub const SHADOWING_DECORRELATION_M: f64 = 9.0;
/// Distances are floored here before path loss; it is the model's reference distance.
pub const MIN_DISTANCE_M: f64 = 1.0;
/// Diagonal loading applied when the shadowing covariance is numerically singular.
pub const CHOLESKY_JITTER: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Number of APs (L).
    pub aps: usize,
    /// Antennas per AP (M).
    pub antennas: usize,
    /// Number of users (K).
    pub users: usize,
    pub side_m: f64,
    /// Eavesdropper placement radius around the attacked user.
    pub eve_radius_m: f64,
    pub user_power_w: f64,
    pub eve_power_w: f64,
    pub ap_power_w: f64,
    pub noise_dbm: f64,
    /// Pilot length in symbols; `None` means one pilot per user.
    pub pilot_len: Option<usize>,
    /// Per-user QoS target (bits/s/Hz).
    pub rate_threshold: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            aps: 300,
            antennas: 4,
            users: 40,
            side_m: 1000.0,
            eve_radius_m: 100.0,
            user_power_w: 0.1,
            eve_power_w: 0.1,
            ap_power_w: 1.0,
            noise_dbm: -92.0,
            pilot_len: None,
            rate_threshold: 0.2,
            seed: 1,
        }
    }
}

impl NetworkConfig {
    /// Desk-scale network used by the examples and tests.
    pub fn desk() -> Self {
        Self { aps: 40, users: 8, ..Self::default() }
    }

    pub fn pilot_len(&self) -> usize {
        self.pilot_len.unwrap_or(self.users)
    }

    pub fn noise_w(&self) -> f64 {
        10f64.powf((self.noise_dbm - 30.0) / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.aps == 0 || self.users == 0 || self.antennas == 0 {
            return fail(format!(
                "aps, antennas and users must be positive (got L={}, M={}, K={})",
                self.aps, self.antennas, self.users
            ));
        }
        if self.aps * self.antennas <= self.users {
            return fail(format!(
                "need L*M > K, got L*M = {} and K = {}",
                self.aps * self.antennas,
                self.users
            ));
        }
        if self.pilot_len() < self.users {
            return fail(format!(
                "pilot length {} is shorter than the number of users {}; pilots must be orthogonal",
                self.pilot_len(),
                self.users
            ));
        }
        for (name, p) in [
            ("user_power_w", self.user_power_w),
            ("eve_power_w", self.eve_power_w),
            ("ap_power_w", self.ap_power_w),
        ] {
            if !(p > 0.0 && p.is_finite()) {
                return fail(format!("{name} must be positive and finite, got {p}"));
            }
        }
        if !(self.side_m > 0.0 && self.side_m.is_finite()) {
            return fail(format!("side_m must be positive, got {}", self.side_m));
        }
        if !(self.eve_radius_m >= 0.0 && self.eve_radius_m < self.side_m) {
            return fail(format!(
                "eve_radius_m must lie in [0, side_m), got {} with side {}",
                self.eve_radius_m, self.side_m
            ));
        }
        if !self.noise_dbm.is_finite() {
            return fail("noise_dbm must be finite".into());
        }
        if !(self.rate_threshold >= 0.0 && self.rate_threshold.is_finite()) {
            return fail(format!("rate_threshold must be non-negative, got {}", self.rate_threshold));
        }
        Ok(())
    }
}

/// One large-scale realization. Powers are already normalized by the noise
/// power, so everything downstream is unitless.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub ap_pos: Vec<Point>,
    pub user_pos: Vec<Point>,
    pub eve_pos: Point,
    /// AP-to-user large-scale gains, L x K (linear).
    pub beta: Array2<f64>,
    /// AP-to-eavesdropper large-scale gains, length L (linear).
    pub beta_e: Array1<f64>,
    pub rho_u: f64,
    pub rho_e: f64,
    pub rho_d: f64,
    pub antennas: usize,
    pub pilot_len: usize,
    pub side_m: f64,
}

impl Scenario {
    pub fn num_aps(&self) -> usize {
        self.ap_pos.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_pos.len()
    }

    pub fn to_record(&self) -> ScenarioRecord {
        ScenarioRecord {
            side_m: self.side_m,
            antennas: self.antennas,
            pilot_len: self.pilot_len,
            ap_pos_m: self.ap_pos.clone(),
            user_pos_m: self.user_pos.clone(),
            eve_pos_m: self.eve_pos,
            beta_db: self.beta.rows().into_iter().map(|r| r.iter().map(|&b| to_db(b)).collect()).collect(),
            beta_e_db: self.beta_e.iter().map(|&b| to_db(b)).collect(),
            rho_u_db: to_db(self.rho_u),
            rho_e_db: to_db(self.rho_e),
            rho_d_db: to_db(self.rho_d),
        }
    }

    pub fn from_record(rec: &ScenarioRecord) -> Result<Self> {
        let l = rec.ap_pos_m.len();
        let k = rec.user_pos_m.len();
        if rec.beta_db.len() != l || rec.beta_db.iter().any(|r| r.len() != k) || rec.beta_e_db.len() != l {
            return Err(Error::Input(format!("scenario record gain tables do not match L={l}, K={k}")));
        }
        let beta = Array2::from_shape_fn((l, k), |(i, j)| from_db(rec.beta_db[i][j]));
        Ok(Self {
            ap_pos: rec.ap_pos_m.clone(),
            user_pos: rec.user_pos_m.clone(),
            eve_pos: rec.eve_pos_m,
            beta,
            beta_e: rec.beta_e_db.iter().map(|&g| from_db(g)).collect(),
            rho_u: from_db(rec.rho_u_db),
            rho_e: from_db(rec.rho_e_db),
            rho_d: from_db(rec.rho_d_db),
            antennas: rec.antennas,
            pilot_len: rec.pilot_len,
            side_m: rec.side_m,
        })
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_record())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_record(&serde_json::from_str(&text)?)
    }
}

/// File form of a [`Scenario`]: positions in meters, gains and SNRs in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRecord {
    pub side_m: f64,
    pub antennas: usize,
    pub pilot_len: usize,
    pub ap_pos_m: Vec<Point>,
    pub user_pos_m: Vec<Point>,
    pub eve_pos_m: Point,
    pub beta_db: Vec<Vec<f64>>,
    pub beta_e_db: Vec<f64>,
    pub rho_u_db: f64,
    pub rho_e_db: f64,
    pub rho_d_db: f64,
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn from_db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// Toroidal distance: the shortest Euclidean distance over the nine images of
/// `q` around the square of side `side_m`.
pub fn wrap_distance(p: Point, q: Point, side_m: f64) -> f64 {
    let axis = |a: f64, b: f64| {
        let d = (a - b).abs().rem_euclid(side_m);
        d.min(side_m - d)
    };
    axis(p[0], q[0]).hypot(axis(p[1], q[1]))
}

/// Path loss in dB at distance `d_m` (reference 1 m).
pub fn pathloss_db(d_m: f64) -> f64 {
    -30.5 - 36.7 * d_m.max(MIN_DISTANCE_M).log10()
}

/// Shadowing covariance between two terminals `dist_m` apart (dB²).
pub fn shadowing_covariance(dist_m: f64) -> f64 {
    SHADOWING_STD_DB * SHADOWING_STD_DB * 2f64.powf(-dist_m / SHADOWING_DECORRELATION_M)
}

/// Draws `rows` independent shadowing vectors (one per AP) over the given
/// terminal positions. Entries within a row are correlated by terminal
/// distance; rows are independent. Result is rows x positions, in dB.
pub fn correlated_shadowing(positions: &[Point], side_m: f64, rows: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng::stream(seed, Purpose::Shadowing, 0);
    correlated_shadowing_with(positions, side_m, rows, &mut rng)
}

pub(crate) fn correlated_shadowing_with(positions: &[Point], side_m: f64, rows: usize, rng: &mut Rng) -> Array2<f64> {
    let n = positions.len();
    let cov = Array2::from_shape_fn((n, n), |(i, j)| shadowing_covariance(wrap_distance(positions[i], positions[j], side_m)));
    let chol = cholesky_with_jitter(&cov);
    let mut out = Array2::zeros((rows, n));
    let mut white = vec![0.0; n];
    for mut row in out.rows_mut() {
        for w in white.iter_mut() {
            *w = rng.sample(StandardNormal);
        }
        for i in 0..n {
            row[i] = (0..=i).map(|j| chol[[i, j]] * white[j]).sum();
        }
    }
    out
}

fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|p| l[[i, p]] * l[[j, p]]).sum();
            if i == j {
                let d = a[[i, i]] - s;
                if !(d > 0.0) {
                    return None;
                }
                l[[i, i]] = d.sqrt();
            } else {
                l[[i, j]] = (a[[i, j]] - s) / l[[j, j]];
            }
        }
    }
    Some(l)
}

fn cholesky_with_jitter(a: &Array2<f64>) -> Array2<f64> {
    if let Some(l) = cholesky(a) {
        return l;
    }
    // Coincident terminals make the covariance singular; load the diagonal.
    let mut jitter = CHOLESKY_JITTER;
    loop {
        let mut loaded = a.clone();
        loaded.diag_mut().mapv_inplace(|d| d + jitter);
        if let Some(l) = cholesky(&loaded) {
            return l;
        }
        jitter *= 10.0;
    }
}

fn uniform_point(rng: &mut Rng, side: f64) -> Point {
    [rng.random::<f64>() * side, rng.random::<f64>() * side]
}

/// Draws one network realization.
///
/// APs and users are uniform on the square, the eavesdropper is uniform on the
/// disk of radius `eve_radius_m` around user 0 (the attacked user) and wrapped
/// back into the square. The eavesdropper takes part in the shadowing
/// correlation as an extra terminal.
pub fn generate_scenario(cfg: &NetworkConfig) -> Result<Scenario> {
    cfg.validate()?;
    let side = cfg.side_m;
    let mut geo = rng::stream(cfg.seed, Purpose::Geometry, 0);
    let ap_pos: Vec<Point> = (0..cfg.aps).map(|_| uniform_point(&mut geo, side)).collect();
    let user_pos: Vec<Point> = (0..cfg.users).map(|_| uniform_point(&mut geo, side)).collect();

    let radius = cfg.eve_radius_m * geo.random::<f64>().sqrt();
    let angle = 2.0 * std::f64::consts::PI * geo.random::<f64>();
    let anchor = user_pos[0];
    let eve_pos = if radius == 0.0 {
        anchor
    } else {
        [
            (anchor[0] + radius * angle.cos()).rem_euclid(side),
            (anchor[1] + radius * angle.sin()).rem_euclid(side),
        ]
    };

    let mut terminals = user_pos.clone();
    terminals.push(eve_pos);
    let shadow = correlated_shadowing(&terminals, side, cfg.aps, cfg.seed);

    let gain = |ap: Point, t: Point, f_db: f64| from_db(pathloss_db(wrap_distance(ap, t, side)) + f_db);
    let k = cfg.users;
    let beta = Array2::from_shape_fn((cfg.aps, k), |(l, j)| gain(ap_pos[l], user_pos[j], shadow[[l, j]]));
    let beta_e = Array1::from_shape_fn(cfg.aps, |l| gain(ap_pos[l], eve_pos, shadow[[l, k]]));

    let noise = cfg.noise_w();
    Ok(Scenario {
        ap_pos,
        user_pos,
        eve_pos,
        beta,
        beta_e,
        rho_u: cfg.user_power_w / noise,
        rho_e: cfg.eve_power_w / noise,
        rho_d: cfg.ap_power_w / noise,
        antennas: cfg.antennas,
        pilot_len: cfg.pilot_len(),
        side_m: side,
    })
}
