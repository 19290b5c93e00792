//! Draws one desk-scale network and prints its geometry and large-scale gains.
//!
//! cargo run --example scenario_geometry -- [seed]

use cfsec::scenario::{to_db, wrap_distance};
use cfsec::{generate_scenario, NetworkConfig};

fn main() -> cfsec::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = NetworkConfig { seed, ..NetworkConfig::desk() };
    let scn = generate_scenario(&cfg)?;

    println!("{} APs, {} users, {} antennas per AP, {} m square", scn.num_aps(), scn.num_users(), scn.antennas, scn.side_m);
    println!("rho_d {:.1} dB, rho_u {:.1} dB, pilot length {}", to_db(scn.rho_d), to_db(scn.rho_u), scn.pilot_len);
    let d = wrap_distance(scn.user_pos[0], scn.eve_pos, scn.side_m);
    println!("eavesdropper {:.1} m from user 0", d);

    println!("user  strongest AP  beta [dB]  beta_E at that AP [dB]");
    for k in 0..scn.num_users() {
        let col = scn.beta.column(k);
        let (l, b) = col.iter().enumerate().fold((0, f64::MIN), |acc, (l, &b)| if b > acc.1 { (l, b) } else { acc });
        println!("{k:>4}  {l:>12}  {:>9.1}  {:>22.1}", to_db(b), to_db(scn.beta_e[l]));
    }
    Ok(())
}
