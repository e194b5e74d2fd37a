//! Optimal versus greedy assignment, then hysteresis on reassignment.

use cridaa::engagement::{matching_cost, regulate_switching, solve_greedy, solve_lsap, EngagementParams};

fn main() {
    let cost = vec![vec![1.0, 2.0], vec![1.5, 10.0]];
    let opt = solve_lsap(&cost);
    let gr = solve_greedy(&cost);
    println!("lsap   {opt:?} cost {}", matching_cost(&cost, &opt));
    println!("greedy {gr:?} cost {}", matching_cost(&cost, &gr));

    let ep = EngagementParams::default();
    let scores = [0.2, 0.9, 0.3];
    let mut cooldowns = vec![0u32; 2];
    let prev = vec![Some(0), Some(2)];
    let planned = vec![Some(1), Some(0)];
    let out = regulate_switching(&prev, &planned, |i| scores[i], |_, _| true, &mut cooldowns, &ep);
    println!("targets {:?} switches {} cooldowns {:?}", out.targets, out.switches, cooldowns);
}
