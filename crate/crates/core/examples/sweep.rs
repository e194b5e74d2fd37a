//! Small sensitivity grid over detection threshold and defender speed.
//!
//! cargo run --release --example sweep -- [reps]

use cridaa::config::SimConfig;
use cridaa::experiments::{emit_csv, parse_grid, sensitivity_sweep, SweepRecord};

fn main() -> cridaa::error::Result<()> {
    let reps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let axes = parse_grid("sensing.p_detect_th=0.10,0.35;defender.v_max=3.0,4.5")?;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let rows = sensitivity_sweep(&SimConfig::default(), &axes, reps, 150, 0, threads)?;
    let recs: Vec<SweepRecord> = rows.iter().map(SweepRecord::from).collect();
    print!("{}", emit_csv(&recs)?);
    Ok(())
}
