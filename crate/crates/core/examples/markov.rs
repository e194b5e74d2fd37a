//! Zone transition estimate, missed-detection adjustment and breach
//! probability over the prediction horizon.

use cridaa::geometry::EnvConfig;
use cridaa::risk::{breach_probability, estimate_transition, markov_risk, missed_detection_adjust, RiskParams};
use cridaa::rng::{stream, Subsystem};
use cridaa::sensing::{isotropic, DetectionReport};

fn main() -> cridaa::error::Result<()> {
    let env = EnvConfig::default();
    let rp = RiskParams::default();
    let rep = DetectionReport { id: 0, mu: [12.0, 0.0, 10.0], sigma: isotropic(1.0), p_d: 0.6, detected: true, s_conf: 0.6 };
    let mut rng = stream(0, Subsystem::Markov, 0, 0);
    let tm = estimate_transition(&rep, &[11.0, 0.0, 10.0], &rp, 7.8147, &env, &mut rng)?;
    println!("zone {:?}", tm.zone);
    for row in &tm.p {
        println!("  {:.3} {:.3} {:.3}", row[0], row[1], row[2]);
    }
    let adj = missed_detection_adjust(&tm, rp.eps_fail);
    for h in 1..=5 {
        let (p, q) = (breach_probability(&tm, h), breach_probability(&adj, h));
        println!("H={h}  p_br={p:.3}  adjusted={q:.3}  risk={:.3}", markov_risk(p, rp.gamma_phi));
    }
    Ok(())
}
