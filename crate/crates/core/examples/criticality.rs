//! Criticality features and fused scores for a few attackers.

use cridaa::config::SimConfig;
use cridaa::kinematics::AgentState;
use cridaa::risk::{criticality_bundle, Estimate, RiskContext};
use cridaa::sensing::{isotropic, DetectionReport};

fn main() -> cridaa::error::Result<()> {
    let cfg = SimConfig::default();
    let est = |id: usize, p: [f64; 3], psi: f64, v: f64| Estimate {
        report: DetectionReport { id, mu: p, sigma: isotropic(1.0), p_d: 0.7, detected: true, s_conf: 0.7 },
        state: AgentState::new(p, psi, v),
    };
    let ests = vec![
        est(0, [14.0, 0.0, 10.0], std::f64::consts::PI, 1.0),
        est(1, [0.0, 22.0, 10.0], -std::f64::consts::FRAC_PI_2, 0.6),
        est(2, [-30.0, 0.0, 10.0], std::f64::consts::FRAC_PI_2, 0.8),
    ];
    let ctx = RiskContext {
        env: &cfg.env,
        class: &cfg.attacker,
        behavior: &cfg.behavior,
        graph: &cfg.graph,
        risk: &cfg.risk,
        c0_sq: cfg.sensing.c0_sq,
        max_ttb: 1000.0,
        seed: 1,
        window: 0,
    };
    let b = criticality_bundle(&ests, &ctx)?;
    println!("id   T_i    r_ttb  dist   mkv    C_comb C_fut  C_assign");
    for k in 0..b.ids.len() {
        println!(
            "{:<4} {:<6.1} {:<6.3} {:<6.3} {:<6.3} {:<6.3} {:<6.3} {:.3}",
            b.ids[k], b.ttb[k], b.features.r_ttb[k], b.features.d[k], b.features.r_mkv[k], b.c_comb[k], b.c_fut[k], b.c_assign[k]
        );
    }
    Ok(())
}
