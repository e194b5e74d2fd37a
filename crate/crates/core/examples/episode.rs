//! One closed-loop episode with a per-window trace.
//!
//! cargo run --release --example episode -- [seed] [deterministic]

use cridaa::config::SimConfig;
use cridaa::sim::run_episode;

fn main() -> cridaa::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = if args.next().as_deref() == Some("deterministic") { SimConfig::deterministic() } else { SimConfig::default() };
    let log = run_episode(&cfg, seed)?;
    println!("  k live det  m  C  eta  sw  events");
    for w in &log.windows {
        let mut ev = String::new();
        for c in &w.captures {
            ev += &format!(" D{}xA{}@{:.1}", c.defender, c.attacker, c.dist_to_hard);
        }
        for b in &w.breaches {
            ev += &format!(" breach A{b}");
        }
        println!("{:>3} {:>4} {:>3} {:>2} {:>2} {:.2} {:>3} {ev}", w.k, w.live, w.n_detected, w.m_k, w.c_k, w.eta_k, w.switches);
    }
    println!(
        "neutralized {} breached {} tau1 {:?} kappa1 {:?} T0 {:?} mean capture distance {:?}",
        log.neutralized, log.breach_count, log.tau1, log.kappa1, log.t0, log.mean_intercept_distance
    );
    Ok(())
}
