//! Paired comparison of EPA-random, OPA-random and joint optimization at one
//! eavesdropper radius, printing SSE quantiles read off the empirical CDFs.
//!
//! cargo run --release --example scheme_cdf -- [realizations]

use cfsec::experiment::{run_campaign, Campaign, OptimizerConfig, SchemeKind};
use cfsec::{cdf, NetworkConfig, SchemeSpec};

fn main() -> cfsec::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let campaign = Campaign { network: NetworkConfig::desk(), schemes: SchemeSpec::all(), optimizer: OptimizerConfig::default() };
    let res = run_campaign(&campaign, n, 0)?;

    println!("{:<12} {:>8} {:>8} {:>8}", "scheme", "p10", "p50", "p90");
    for kind in SchemeKind::ALL {
        let c = cdf(&res.sse_samples(kind))?;
        let q = |p: f64| c.iter().find(|(_, cp)| *cp >= p).map_or(f64::NAN, |(x, _)| *x);
        println!("{:<12} {:>8.3} {:>8.3} {:>8.3}", kind.label(), q(0.1), q(0.5), q(0.9));
    }
    println!("joint QoS fraction {:.2}", res.qos_fraction(SchemeKind::Joint));
    Ok(())
}
