//! Link-level Monte-Carlo reference for the closed-form rates.
//!
//! Small-scale channels, the spoofed pilot observation, MMSE estimates and the
//! PZF/PMRT precoders are all realized explicitly. The use-and-then-forget
//! SINRs are then assembled from sample moments of the effective gains
//! `h[l,k]^H w[l,t]`, which makes this module an independent check of
//! [`crate::channel`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::channel::{ChannelStats, PowerMatrix};
use crate::rng::{self, Purpose, Rng};
use crate::{Error, Result};

type C64 = Complex64;

/// Number of independent batches used for standard errors.
pub const BATCHES: usize = 20;
/// Below this many draws the estimates are considered statistically inconclusive.
pub const MIN_CONCLUSIVE_DRAWS: usize = 1000;

fn cn(rng: &mut Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// One realization of the small-scale fading and pilot noise.
#[derive(Debug, Clone)]
pub struct SmallScaleDraw {
    /// Per AP, M x K true channels to the users.
    pub h: Vec<DMatrix<C64>>,
    /// Per AP, true channel to the eavesdropper.
    pub h_e: Vec<DVector<C64>>,
    /// Per AP, M x K noise on each user's pilot projection.
    pub pilot_noise: Vec<DMatrix<C64>>,
}

/// MMSE channel estimates built from a [`SmallScaleDraw`].
#[derive(Debug, Clone)]
pub struct Estimates {
    /// Per AP, M x K.
    pub h_hat: Vec<DMatrix<C64>>,
    /// Per AP, the eavesdropper's effective estimate (a scaled copy of the attacked user's).
    pub h_hat_e: Vec<DVector<C64>>,
}

pub fn draw_estimates(stats: &ChannelStats, seed: u64) -> (SmallScaleDraw, Estimates) {
    let mut rng = rng::stream(seed, Purpose::SmallScale, 0);
    draw_estimates_with(stats, &mut rng)
}

/// Draws channels and forms the MMSE estimates from the projected pilot
/// observations. The attacked user's projection also carries the
/// eavesdropper's channel.
pub fn draw_estimates_with(stats: &ChannelStats, rng: &mut Rng) -> (SmallScaleDraw, Estimates) {
    let (l_count, k_count) = stats.beta.dim();
    let m = stats.antennas;
    let a = stats.attacked;
    let tau = stats.pilot_len as f64;
    let (su, se) = ((tau * stats.rho_u).sqrt(), (tau * stats.rho_e).sqrt());

    let mut draw = SmallScaleDraw { h: Vec::with_capacity(l_count), h_e: Vec::with_capacity(l_count), pilot_noise: Vec::with_capacity(l_count) };
    let mut est = Estimates { h_hat: Vec::with_capacity(l_count), h_hat_e: Vec::with_capacity(l_count) };

    for l in 0..l_count {
        let h = DMatrix::from_fn(m, k_count, |_, k| cn(rng) * stats.beta[[l, k]].sqrt());
        let h_e = DVector::from_fn(m, |_, _| cn(rng) * stats.beta_e[l].sqrt());
        let noise = DMatrix::from_fn(m, k_count, |_, _| cn(rng));

        let mut h_hat = DMatrix::zeros(m, k_count);
        let mut h_hat_e = DVector::zeros(m);
        for k in 0..k_count {
            let b = stats.beta[[l, k]];
            let attacked = k == a;
            let spoof = if attacked { tau * stats.rho_e * stats.beta_e[l] } else { 0.0 };
            let denom = tau * stats.rho_u * b + spoof + 1.0;
            let c = su * b / denom;
            let mut y = h.column(k) * C64::from(su) + noise.column(k);
            if attacked {
                y += &h_e * C64::from(se);
                h_hat_e = &y * C64::from(se * stats.beta_e[l] / denom);
            }
            h_hat.set_column(k, &(y * C64::from(c)));
        }
        draw.h.push(h);
        draw.h_e.push(h_e);
        draw.pilot_noise.push(noise);
        est.h_hat.push(h_hat);
        est.h_hat_e.push(h_hat_e);
    }
    (draw, est)
}

/// Per-AP precoders. Column `k` of `w[l]` is the precoder AP `l` uses for user `k`.
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    pub w: Vec<DMatrix<C64>>,
    /// Protective projection onto the orthogonal complement of the strong users' estimates.
    pub b: Vec<DMatrix<C64>>,
}

/// PZF toward each AP's strong group, protective MRT toward its weak group.
pub fn build_precoders(h_hat: &[DMatrix<C64>], stats: &ChannelStats) -> Result<PrecoderSet> {
    let m = stats.antennas;
    let k_count = stats.num_users();
    let mut w_all = Vec::with_capacity(h_hat.len());
    let mut b_all = Vec::with_capacity(h_hat.len());
    for (l, hh) in h_hat.iter().enumerate() {
        let strong = &stats.strong_sets[l];
        let n = strong.len();
        let dof = (m - n) as f64;
        let mut w = DMatrix::zeros(m, k_count);
        let b = if n == 0 {
            DMatrix::identity(m, m)
        } else {
            let hs = DMatrix::from_fn(m, n, |i, j| hh[(i, strong[j])]);
            let gram = hs.adjoint() * &hs;
            let inv = gram.cholesky().ok_or(Error::SingularGram { ap: l })?.inverse();
            let x = &hs * inv;
            for (j, &k) in strong.iter().enumerate() {
                let scale = (dof * stats.gamma[[l, k]]).sqrt();
                w.set_column(k, &(x.column(j) * C64::from(scale)));
            }
            DMatrix::identity(m, m) - &x * hs.adjoint()
        };
        for &k in &stats.weak_sets[l] {
            let scale = 1.0 / (dof * stats.gamma[[l, k]]).sqrt();
            w.set_column(k, &(&b * hh.column(k) * C64::from(scale)));
        }
        w_all.push(w);
        b_all.push(b);
    }
    Ok(PrecoderSet { w: w_all, b: b_all })
}

/// Empirical UatF SINRs with batch-means standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSinr {
    pub user: Vec<f64>,
    pub user_se: Vec<f64>,
    pub eve: f64,
    pub eve_se: f64,
    pub draws: usize,
}

impl EmpiricalSinr {
    pub fn conclusive(&self) -> bool {
        self.draws >= MIN_CONCLUSIVE_DRAWS
    }
}

#[derive(Debug, Clone)]
struct Moments {
    n: usize,
    /// sum of the desired-signal gain s[k,k]
    ds: Vec<C64>,
    /// sum of |s[k,k]|^2
    ds_sq: Vec<f64>,
    /// sum over t != k of |s[k,t]|^2
    inter: Vec<f64>,
    eve_sig: f64,
    eve_inter: f64,
}

impl Moments {
    fn new(k: usize) -> Self {
        Self { n: 0, ds: vec![C64::new(0.0, 0.0); k], ds_sq: vec![0.0; k], inter: vec![0.0; k], eve_sig: 0.0, eve_inter: 0.0 }
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        for k in 0..self.ds.len() {
            self.ds[k] += o.ds[k];
            self.ds_sq[k] += o.ds_sq[k];
            self.inter[k] += o.inter[k];
        }
        self.eve_sig += o.eve_sig;
        self.eve_inter += o.eve_inter;
    }

    fn sinrs(&self) -> (Vec<f64>, f64) {
        let n = self.n as f64;
        let user = (0..self.ds.len())
            .map(|k| {
                let mean = self.ds[k] / n;
                let var = (self.ds_sq[k] / n - mean.norm_sqr()).max(0.0);
                mean.norm_sqr() / (var + self.inter[k] / n + 1.0)
            })
            .collect();
        (user, (self.eve_sig / n) / (self.eve_inter / n + 1.0))
    }
}

/// Effective gains of one draw: per AP, `g[l][(k,t)] = h[l,k]^H w[l,t]` and
/// `g_e[l][t] = h[l,E]^H w[l,t]`.
struct Gains {
    g: Vec<DMatrix<C64>>,
    g_e: Vec<DVector<C64>>,
}

fn draw_gains(stats: &ChannelStats, rng: &mut Rng) -> Gains {
    loop {
        let (draw, est) = draw_estimates_with(stats, rng);
        // singular Gram matrices have probability zero; redraw if one shows up
        if let Ok(pre) = build_precoders(&est.h_hat, stats) {
            let g = draw.h.iter().zip(&pre.w).map(|(h, w)| h.adjoint() * w).collect();
            let g_e = draw.h_e.iter().zip(&pre.w).map(|(he, w)| w.adjoint() * he).map(|v| v.map(|c| c.conj())).collect();
            return Gains { g, g_e };
        }
    }
}

fn accumulate(stats: &ChannelStats, theta: &PowerMatrix, gains: &Gains, mom: &mut Moments, s: &mut DMatrix<C64>, s_e: &mut DVector<C64>) {
    let k_count = stats.num_users();
    let a = stats.attacked;
    let sq = stats.rho_d.sqrt();
    let th = theta.view();
    s.fill(C64::new(0.0, 0.0));
    s_e.fill(C64::new(0.0, 0.0));
    for (l, (g, ge)) in gains.g.iter().zip(&gains.g_e).enumerate() {
        for t in 0..k_count {
            let amp = sq * th[[l, t]];
            if amp == 0.0 {
                continue;
            }
            for k in 0..k_count {
                s[(k, t)] += g[(k, t)] * amp;
            }
            s_e[t] += ge[t] * amp;
        }
    }
    mom.n += 1;
    for k in 0..k_count {
        mom.ds[k] += s[(k, k)];
        mom.ds_sq[k] += s[(k, k)].norm_sqr();
        mom.inter[k] += (0..k_count).filter(|&t| t != k).map(|t| s[(k, t)].norm_sqr()).sum::<f64>();
    }
    mom.eve_sig += s_e[a].norm_sqr();
    mom.eve_inter += (0..k_count).filter(|&t| t != a).map(|t| s_e[t].norm_sqr()).sum::<f64>();
}

/// Estimates the user and eavesdropper SINRs for several power matrices over
/// the same channel draws. Batches run in parallel on independent streams and
/// are merged in batch order, so the result does not depend on thread count.
pub fn empirical_sinr_many(stats: &ChannelStats, thetas: &[PowerMatrix], n_draws: usize, seed: u64) -> Result<Vec<EmpiricalSinr>> {
    if n_draws < 2 * BATCHES {
        return Err(Error::Input(format!("need at least {} draws, got {n_draws}", 2 * BATCHES)));
    }
    let k_count = stats.num_users();
    for th in thetas {
        if th.view().dim() != stats.beta.dim() {
            return Err(Error::Input("power matrix shape does not match the channel statistics".into()));
        }
    }
    let batches: Vec<Vec<Moments>> = (0..BATCHES)
        .into_par_iter()
        .map(|b| {
            let count = n_draws / BATCHES + usize::from(b < n_draws % BATCHES);
            let mut rng = rng::stream(seed, Purpose::SmallScale, b as u64);
            let mut moms = vec![Moments::new(k_count); thetas.len()];
            let mut s = DMatrix::zeros(k_count, k_count);
            let mut s_e = DVector::zeros(k_count);
            for _ in 0..count {
                let gains = draw_gains(stats, &mut rng);
                for (th, mom) in thetas.iter().zip(moms.iter_mut()) {
                    accumulate(stats, th, &gains, mom, &mut s, &mut s_e);
                }
            }
            moms
        })
        .collect();

    let out = (0..thetas.len())
        .map(|i| {
            let mut pooled = Moments::new(k_count);
            let mut per_batch_user = vec![Vec::with_capacity(BATCHES); k_count];
            let mut per_batch_eve = Vec::with_capacity(BATCHES);
            for batch in &batches {
                pooled.merge(&batch[i]);
                let (u, e) = batch[i].sinrs();
                for k in 0..k_count {
                    per_batch_user[k].push(u[k]);
                }
                per_batch_eve.push(e);
            }
            let (user, eve) = pooled.sinrs();
            EmpiricalSinr {
                user,
                user_se: per_batch_user.iter().map(|v| std_error(v)).collect(),
                eve,
                eve_se: std_error(&per_batch_eve),
                draws: n_draws,
            }
        })
        .collect();
    Ok(out)
}

pub fn empirical_sinr(stats: &ChannelStats, theta: &PowerMatrix, n_draws: usize, seed: u64) -> Result<EmpiricalSinr> {
    Ok(empirical_sinr_many(stats, std::slice::from_ref(theta), n_draws, seed)?.remove(0))
}

fn std_error(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}
