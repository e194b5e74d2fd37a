//! Monte Carlo batch over one preset.
//!
//! cargo run --release --example monte_carlo -- [deterministic|probabilistic] [runs] [key=value ...]

use cridaa::config::SimConfig;
use cridaa::experiments::monte_carlo;
use std::time::Instant;

fn main() -> cridaa::error::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = match args.first().map(String::as_str) {
        Some("deterministic") => SimConfig::deterministic(),
        _ => SimConfig::probabilistic(),
    };
    let runs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    for kv in args.iter().skip(2) {
        if let Some((k, v)) = kv.split_once('=') {
            cfg.set(k, v)?;
        }
    }
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let t = Instant::now();
    let (s, _) = monte_carlo(&cfg, runs, 0, threads)?;
    println!("runs                 {}", s.n_runs);
    println!("interception rate    {:.3}", s.interception_rate);
    println!("breach rate          {:.3}", s.breach_rate);
    println!("P(no breach)         {:.3} [{:.3}, {:.3}]", s.p_no_breach, s.ci_low, s.ci_high);
    println!("mean capture dist    {:?}", s.mean_intercept_distance);
    println!("kappa1 mean/median   {:?} / {:?}", s.kappa1_mean, s.kappa1_median);
    println!("eta_bar p_min theta  {:.3} {:.3} {:.4}", s.eta_bar, s.p_min_hat, s.theta_hat);
    println!("mean edges           {:.2}", s.mean_edges);
    println!("wall                 {:.1}s ({:.3}s/run)", t.elapsed().as_secs_f64(), s.mean_wall_time_s);
    Ok(())
}
