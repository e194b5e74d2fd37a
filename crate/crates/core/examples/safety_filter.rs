//! Two defenders on a collision course: nominal versus filtered inputs.

use cridaa::geometry::EnvConfig;
use cridaa::kinematics::{AgentClass, AgentState, ControlInput};
use cridaa::safety::{defender_filter, discrete_barrier_rate, BarrierParams};

fn main() {
    let env = EnvConfig::default();
    let class = AgentClass::defender_default();
    let bp = BarrierParams::default();
    let states = vec![AgentState::new([0.0, 0.0, 10.0], 0.0, 3.5), AgentState::new([6.0, 0.2, 10.0], std::f64::consts::PI, 3.5)];
    let nominal = vec![ControlInput::default(); 2];
    let out = defender_filter(&states, &nominal, &class, &bp, &env, 10);
    println!("feasible={} modified={}", out.feasible, out.modified);
    for (u0, u) in nominal.iter().zip(&out.inputs) {
        println!("  omega {:+.3} -> {:+.3}   w {:+.3} -> {:+.3}", u0.omega, u.omega, u0.w, u.w);
    }
    let before = discrete_barrier_rate(&states[0], &nominal[0], &states[1], &nominal[1], env.r_col_d, bp.kappa_d, &env, 10);
    let after = discrete_barrier_rate(&states[0], &out.inputs[0], &states[1], &out.inputs[1], env.r_col_d, bp.kappa_d, &env, 10);
    println!("barrier rate  nominal {before:.3}  filtered {after:.3}");
}
