//! Paired-seed ablation in one regime, printed as a regime x variant CSV.
//!
//! cargo run --release --example ablation -- [runs] [regime]

use cridaa::config::{Regime, SimConfig};
use cridaa::experiments::{ablation_suite, emit_csv, AblationRecord};
use cridaa::sim::Variant;

fn main() -> cridaa::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let runs = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let regime: Regime = args.next().as_deref().unwrap_or("Nominal").parse()?;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let rows = ablation_suite(&SimConfig::default(), &[regime], &Variant::ALL, runs, 0, threads)?;
    let recs: Vec<AblationRecord> = rows.iter().map(AblationRecord::from).collect();
    print!("{}", emit_csv(&recs)?);
    Ok(())
}
