//! Detection probability against range and one noisy sensing sweep.

use cridaa::kinematics::AgentState;
use cridaa::rng::{stream, Subsystem};
use cridaa::sensing::{detection_probability, sense, SensingParams};

fn main() {
    let sp = SensingParams { snr0: 33.0, ..SensingParams::default() };
    println!("range  P_d");
    for r in (0..=40).step_by(5) {
        println!("{r:>5}  {:.3}", detection_probability(r as f64, &sp));
    }

    let agents: Vec<AgentState> = [8.0, 16.0, 24.0, 32.0]
        .iter()
        .map(|&x| AgentState::new([x, 0.0, 10.0], 0.0, 1.0))
        .collect();
    let mut rng = stream(7, Subsystem::Sensing, 0, 0);
    for rep in sense(&agents, &sp, &mut rng) {
        println!(
            "id {} detected={} p_d={:.3} mu=({:.2}, {:.2}, {:.2}) std={:.2}",
            rep.id,
            rep.detected,
            rep.p_d,
            rep.mu[0],
            rep.mu[1],
            rep.mu[2],
            rep.sigma[0][0].sqrt()
        );
    }
}
