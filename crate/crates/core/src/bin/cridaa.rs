use clap::{Args, Parser, Subcommand};
use cridaa::config::{Regime, SimConfig};
use cridaa::error::{Error, Result};
use cridaa::experiments::{
    ablation_suite, drift_diagnostics, emit_csv, monte_carlo, parse_grid, sensitivity_sweep, AblationRecord, McSummary,
    SummaryRecord, SweepRecord,
};
use cridaa::sim::{apply_variant, run_episode, RunLog, Variant};
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "cridaa", version, about = "Counter-swarm defense simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML file of dotted keys applied over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    regime: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Single episode, JSONL log.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo batch over consecutive seeds.
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Regimes x variants on paired seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Cartesian sensitivity grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// e.g. "sensing.p_detect_th=0.05,0.1;defender.v_max=3.5,4"
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long, default_value_t = 150)]
        horizon: usize,
    },
    /// Drift and tail tables from existing JSONL logs.
    Diagnose {
        logs: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn base_config(c: &Common) -> Result<SimConfig> {
    let mut cfg = match &c.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    if let Some(r) = &c.regime {
        cfg = r.parse::<Regime>()?.apply(&cfg);
    }
    if let Some(v) = &c.variant {
        cfg = apply_variant(&cfg, v.parse()?);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(dir: &Path, name: &str, body: &str) -> Result<String> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), body)?;
    Ok(name.to_string())
}

fn manifest(dir: &Path, verb: &str, digest: &str, outputs: &[String]) -> Result<()> {
    let m = json!({ "verb": verb, "config_digest": digest, "outputs": outputs });
    write(dir, "manifest.json", &serde_json::to_string_pretty(&m)?)?;
    Ok(())
}

fn print_summary(s: &McSummary) {
    println!(
        "runs={} intercept={:.3} breach={:.3} p_no_breach={:.3} [{:.3},{:.3}] dist={} kappa1={} theta={:.4}",
        s.n_runs,
        s.interception_rate,
        s.breach_rate,
        s.p_no_breach,
        s.ci_low,
        s.ci_high,
        s.mean_intercept_distance.map_or("-".into(), |d| format!("{d:.2}")),
        s.kappa1_mean.map_or("-".into(), |d| format!("{d:.2}")),
        s.theta_hat
    );
}

fn main() {
    if let Err(e) = real_main() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run { common } => {
            let cfg = base_config(&common)?;
            let log = run_episode(&cfg, common.seed)?;
            let outs = vec![
                write(&common.out, "config.toml", &cfg.to_toml())?,
                write(&common.out, &format!("run_{}.jsonl", common.seed), &log.to_jsonl())?,
            ];
            manifest(&common.out, "run", &cfg.digest(), &outs)?;
            println!(
                "seed={} neutralized={} breached={} survivors={} tau1={:?} kappa1={:?} T0={:?}",
                log.seed,
                log.neutralized,
                log.breach_count,
                log.survivors(),
                log.tau1,
                log.kappa1,
                log.t0
            );
        }
        Cmd::Mc { common, runs, parallel } => {
            let cfg = base_config(&common)?;
            let (s, logs) = monte_carlo(&cfg, runs, common.seed, parallel)?;
            let jsonl: String = logs.iter().map(RunLog::to_jsonl).collect();
            let outs = vec![
                write(&common.out, "config.toml", &cfg.to_toml())?,
                write(&common.out, "runs.jsonl", &jsonl)?,
                write(&common.out, "summary.json", &serde_json::to_string_pretty(&s)?)?,
                write(&common.out, "summary.csv", &emit_csv(&[SummaryRecord::new("mc", &s)])?)?,
            ];
            manifest(&common.out, "mc", &cfg.digest(), &outs)?;
            print_summary(&s);
        }
        Cmd::Ablate { common, runs, parallel } => {
            let cfg = match &common.config {
                Some(p) => SimConfig::load(p)?,
                None => SimConfig::default(),
            };
            let regimes = match &common.regime {
                Some(r) => vec![r.parse::<Regime>()?],
                None => Regime::ALL.to_vec(),
            };
            let variants = match &common.variant {
                Some(v) => vec![v.parse::<Variant>()?],
                None => Variant::ALL.to_vec(),
            };
            let rows = ablation_suite(&cfg, &regimes, &variants, runs, common.seed, parallel)?;
            let recs: Vec<AblationRecord> = rows.iter().map(AblationRecord::from).collect();
            let outs = vec![write(&common.out, "ablation.csv", &emit_csv(&recs)?)?];
            manifest(&common.out, "ablate", &cfg.digest(), &outs)?;
            for r in &rows {
                print!("{:<16} {:<14} ", r.regime, r.variant);
                print_summary(&r.summary);
            }
        }
        Cmd::Sweep { common, grid, runs, parallel, horizon } => {
            let cfg = base_config(&common)?;
            let axes = parse_grid(&grid)?;
            let rows = sensitivity_sweep(&cfg, &axes, runs, horizon, common.seed, parallel)?;
            let recs: Vec<SweepRecord> = rows.iter().map(SweepRecord::from).collect();
            let outs = vec![write(&common.out, "sweep.csv", &emit_csv(&recs)?)?];
            manifest(&common.out, "sweep", &cfg.digest(), &outs)?;
            for (r, rec) in rows.iter().zip(&recs) {
                print!("{:<40} ", rec.cell);
                print_summary(&r.summary);
            }
        }
        Cmd::Diagnose { logs, out } => {
            if logs.is_empty() {
                return Err(Error::Config("diagnose needs at least one JSONL log".into()));
            }
            let mut runs = Vec::new();
            for p in &logs {
                runs.extend(RunLog::parse_many(&fs::read_to_string(p)?)?);
            }
            let d = drift_diagnostics(&runs)?;
            #[derive(serde::Serialize)]
            struct TailRow {
                n: usize,
                empirical: f64,
                bound: f64,
            }
            let tail: Vec<TailRow> = d.tail.iter().map(|&(n, e, b)| TailRow { n, empirical: e, bound: b }).collect();
            let outs = vec![
                write(&out, "drift.json", &serde_json::to_string_pretty(&d)?)?,
                write(&out, "tail.csv", &emit_csv(&tail)?)?,
            ];
            let digests: Vec<&str> = runs.iter().map(|r| r.config_digest.as_str()).collect();
            manifest(&out, "diagnose", digests.first().copied().unwrap_or(""), &outs)?;
            println!(
                "runs={} eta_bar={:.3} p_min_hat={:.4} theta_hat={:.4}{}",
                runs.len(),
                d.eta_bar,
                d.p_min_hat,
                d.theta_hat,
                if d.floored { " (floored)" } else { "" }
            );
            for t in tail.iter().take(11) {
                println!("n={:<3} P(kappa1 > tau1 + n)={:.3}  (1-p_min)^(n+1)={:.3}", t.n, t.empirical, t.bound);
            }
        }
    }
    Ok(())
}
