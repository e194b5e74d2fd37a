//! Drift proxy and first-capture tail from a batch of runs, with a JSONL
//! round trip in between.

use cridaa::config::SimConfig;
use cridaa::experiments::{drift_diagnostics, run_batch};
use cridaa::sim::RunLog;

fn main() -> cridaa::error::Result<()> {
    let runs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let logs = run_batch(&SimConfig::default(), runs, 0, 1)?;
    let text: String = logs.iter().map(RunLog::to_jsonl).collect();
    let back = RunLog::parse_many(&text)?;
    let d = drift_diagnostics(&back)?;
    println!("eta_bar {:.3}  p_min_hat {:.4}  theta_hat {:.4}  floored {}", d.eta_bar, d.p_min_hat, d.theta_hat, d.floored);
    println!("  n  P(kappa1 > tau1+n)  (1-p_min)^(n+1)");
    for (n, e, b) in d.tail.iter().take(11) {
        println!("{n:>3}  {e:>18.3}  {b:>15.3}");
    }
    Ok(())
}
