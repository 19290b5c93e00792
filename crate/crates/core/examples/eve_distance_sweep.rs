//! Average SSE of each scheme as the eavesdropper moves away from its target.
//!
//! cargo run --release --example eve_distance_sweep -- [realizations]

use cfsec::experiment::{Campaign, OptimizerConfig};
use cfsec::{sweep_re, NetworkConfig, SchemeSpec};

fn main() -> cfsec::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let campaign = Campaign { network: NetworkConfig::desk(), schemes: SchemeSpec::all(), optimizer: OptimizerConfig::default() };
    let sweep = sweep_re(&campaign, &[50.0, 100.0, 150.0, 200.0], n, 0)?;
    println!("{:>6} {:<12} {:>8} {:>8}", "r_E", "scheme", "mean", "se");
    for p in &sweep.points {
        println!("{:>6.0} {:<12} {:>8.3} {:>8.3}", p.eve_radius_m, p.scheme.label(), p.mean_sse, p.se_sse);
    }
    Ok(())
}
