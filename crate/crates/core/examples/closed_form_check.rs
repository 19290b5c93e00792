//! Compares the closed-form SINRs with Monte-Carlo estimates obtained by
//! realizing channels, estimates and precoders explicitly.
//!
//! cargo run --release --example closed_form_check -- [draws]

use cfsec::montecarlo::empirical_sinr;
use cfsec::{estimate_gains, generate_scenario, sinr_eve, sinr_user, GroupingRule, NetworkConfig, PowerMatrix};

fn main() -> cfsec::Result<()> {
    let draws = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let cfg = NetworkConfig { aps: 20, users: 8, antennas: 8, seed: 3, ..NetworkConfig::default() };
    let stats = estimate_gains(&generate_scenario(&cfg)?, 0, &GroupingRule::default())?;
    let theta = PowerMatrix::equal(cfg.aps, cfg.users);
    let mc = empirical_sinr(&stats, &theta, draws, 11)?;

    println!("{draws} draws, equal power");
    println!("{:>6} {:>12} {:>12} {:>10}", "", "closed form", "monte carlo", "std err");
    for k in 0..cfg.users {
        println!("{:>6} {:>12.4} {:>12.4} {:>10.4}", format!("user{k}"), sinr_user(&stats, &theta, k), mc.user[k], mc.user_se[k]);
    }
    println!("{:>6} {:>12.4} {:>12.4} {:>10.4}", "eve", sinr_eve(&stats, &theta), mc.eve, mc.eve_se);
    Ok(())
}
