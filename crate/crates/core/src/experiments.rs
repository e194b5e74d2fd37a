//! Batch protocols: Monte Carlo summaries, paired-seed ablations, sensitivity
//! grids, drift diagnostics, and their CSV forms.

use crate::config::{Regime, SimConfig};
use crate::error::{Error, Result};
use crate::sim::{apply_variant, run_episode, RunLog, Variant};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Floor applied to p_min estimates.
pub const P_MIN_FLOOR: f64 = 1e-3;

/// p ± 1.96·sqrt(p(1-p)/n), clipped to [0,1].
pub fn ci_normal(p: f64, n: usize) -> (f64, f64) {
    let half = 1.96 * (p * (1.0 - p) / n as f64).sqrt();
    ((p - half).max(0.0), (p + half).min(1.0))
}

/// Wilson score interval at 95%.
pub fn ci_wilson(p: f64, n: usize) -> (f64, f64) {
    let z = 1.96f64;
    let n = n as f64;
    let den = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / den;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / den;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CiMethod {
    #[default]
    Normal,
    Wilson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub n_runs: usize,
    pub interception_rate: f64,
    pub breach_rate: f64,
    pub survivor_rate: f64,
    pub mean_breach_time: Option<f64>,
    pub mean_intercept_distance: Option<f64>,
    pub p_no_breach: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_breach_count: f64,
    pub kappa1_mean: Option<f64>,
    pub kappa1_median: Option<f64>,
    pub eta_bar: f64,
    pub p_min_hat: f64,
    pub theta_hat: f64,
    pub mean_edges: f64,
    pub mean_wall_time_s: f64,
}

fn mean(x: &[f64]) -> Option<f64> {
    if x.is_empty() {
        None
    } else {
        Some(x.iter().sum::<f64>() / x.len() as f64)
    }
}

fn median(x: &mut [f64]) -> Option<f64> {
    if x.is_empty() {
        return None;
    }
    x.sort_by(f64::total_cmp);
    let n = x.len();
    Some(if n % 2 == 1 { x[n / 2] } else { 0.5 * (x[n / 2 - 1] + x[n / 2]) })
}

/// Linear-interpolated quantile of a sample.
pub fn quantile(x: &[f64], q: f64) -> Option<f64> {
    if x.is_empty() {
        return None;
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Some(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub eta_bar: f64,
    pub p_min_hat: f64,
    pub theta_hat: f64,
    /// True when no window was eligible and the floor was used.
    pub floored: bool,
    /// (n, empirical P(kappa1 > tau1 + n), (1 - p_min_hat)^(n+1)).
    pub tail: Vec<(usize, f64, f64)>,
}

pub fn drift_diagnostics(runs: &[RunLog]) -> Result<Drift> {
    if runs.is_empty() {
        return Err(Error::Validation("drift diagnostics need at least one run".into()));
    }
    let etas: Vec<f64> = runs.iter().flat_map(|r| r.windows.iter().filter(|w| w.c_k > 0).map(|w| w.eta_k)).collect();
    let fracs: Vec<f64> = runs.iter().flat_map(|r| r.windows.iter().filter_map(|w| w.success_fraction())).collect();
    let eta_bar = mean(&etas).unwrap_or(0.0);
    let (p_min_hat, floored) = match quantile(&fracs, 0.05) {
        Some(q) => (q.max(P_MIN_FLOOR), false),
        None => (P_MIN_FLOOR, true),
    };
    let tail = (0..=20)
        .map(|n| {
            let eligible: Vec<&RunLog> = runs.iter().filter(|r| r.tau1.is_some()).collect();
            let surv = if eligible.is_empty() {
                0.0
            } else {
                eligible
                    .iter()
                    .filter(|r| match (r.tau1, r.kappa1) {
                        (Some(t), Some(k)) => k > t + n,
                        (Some(_), None) => true,
                        _ => false,
                    })
                    .count() as f64
                    / eligible.len() as f64
            };
            (n, surv, (1.0 - p_min_hat).powi(n as i32 + 1))
        })
        .collect();
    Ok(Drift { eta_bar, p_min_hat, theta_hat: eta_bar * p_min_hat, floored, tail })
}

/// Aggregate per-run logs. Runs are sorted by seed first so the result does
/// not depend on input order.
pub fn summarize(runs: &[RunLog], ci: CiMethod) -> Result<McSummary> {
    if runs.is_empty() {
        return Err(Error::Validation("summary needs at least one run".into()));
    }
    let mut runs: Vec<&RunLog> = runs.iter().collect();
    runs.sort_by_key(|r| r.seed);
    let n = runs.len();
    let total: usize = runs.iter().map(|r| r.n_attackers).sum();
    let caught: usize = runs.iter().map(|r| r.neutralized).sum();
    let breached: usize = runs.iter().map(|r| r.breach_count).sum();
    let rate = |x: usize| if total == 0 { 0.0 } else { x as f64 / total as f64 };
    let breach_times: Vec<f64> =
        runs.iter().flat_map(|r| r.windows.iter().flat_map(|w| std::iter::repeat_n(w.t_k, w.breaches.len()))).collect();
    let mut dsum = 0.0;
    let mut dn = 0usize;
    for r in &runs {
        for w in &r.windows {
            for c in &w.captures {
                dsum += c.dist_to_hard;
                dn += 1;
            }
        }
    }
    let p_no_breach = runs.iter().filter(|r| r.breach_count == 0).count() as f64 / n as f64;
    let (ci_low, ci_high) = match ci {
        CiMethod::Normal => ci_normal(p_no_breach, n),
        CiMethod::Wilson => ci_wilson(p_no_breach, n),
    };
    let mut k1: Vec<f64> = runs.iter().filter_map(|r| r.kappa1.map(|k| k as f64)).collect();
    let owned: Vec<RunLog> = runs.iter().map(|r| (*r).clone()).collect();
    let drift = drift_diagnostics(&owned)?;
    let edges: Vec<f64> = runs.iter().flat_map(|r| r.windows.iter().map(|w| w.edges as f64)).collect();
    Ok(McSummary {
        n_runs: n,
        interception_rate: rate(caught),
        breach_rate: rate(breached),
        survivor_rate: rate(total - caught - breached),
        mean_breach_time: mean(&breach_times),
        mean_intercept_distance: if dn == 0 { None } else { Some(dsum / dn as f64) },
        p_no_breach,
        ci_low,
        ci_high,
        mean_breach_count: breached as f64 / n as f64,
        kappa1_mean: mean(&k1),
        kappa1_median: median(&mut k1),
        eta_bar: drift.eta_bar,
        p_min_hat: drift.p_min_hat,
        theta_hat: drift.theta_hat,
        mean_edges: mean(&edges).unwrap_or(0.0),
        mean_wall_time_s: runs.iter().map(|r| r.wall_time_s).sum::<f64>() / n as f64,
    })
}

/// Run seeds base_seed..base_seed+n_runs on a pool of `parallel` threads.
/// Logs come back sorted by seed.
pub fn run_batch(cfg: &SimConfig, n_runs: usize, base_seed: u64, parallel: usize) -> Result<Vec<RunLog>> {
    if n_runs == 0 {
        return Err(Error::Validation("n_runs must be >= 1".into()));
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    let seeds: Vec<u64> = (0..n_runs as u64).map(|i| base_seed + i).collect();
    let results: Vec<(u64, std::thread::Result<Result<RunLog>>)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| (s, std::panic::catch_unwind(|| run_episode(cfg, s))))
            .collect()
    });
    let mut logs = Vec::with_capacity(n_runs);
    for (seed, r) in results {
        match r {
            Ok(Ok(log)) => logs.push(log),
            Ok(Err(e)) => return Err(Error::Episode { seed, msg: e.to_string() }),
            Err(p) => {
                let msg = p
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| p.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "panic".into());
                return Err(Error::Episode { seed, msg });
            }
        }
    }
    Ok(logs)
}

pub fn monte_carlo(cfg: &SimConfig, n_runs: usize, base_seed: u64, parallel: usize) -> Result<(McSummary, Vec<RunLog>)> {
    let logs = run_batch(cfg, n_runs, base_seed, parallel)?;
    Ok((summarize(&logs, CiMethod::Normal)?, logs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub regime: String,
    pub variant: String,
    pub summary: McSummary,
}

/// Every variant of every regime on the same seeds.
pub fn ablation_suite(
    base: &SimConfig,
    regimes: &[Regime],
    variants: &[Variant],
    n_runs: usize,
    base_seed: u64,
    parallel: usize,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &r in regimes {
        let rc = r.apply(base);
        for &v in variants {
            let (summary, _) = monte_carlo(&apply_variant(&rc, v), n_runs, base_seed, parallel)?;
            rows.push(AblationRow { regime: r.as_str().into(), variant: v.as_str().into(), summary });
        }
    }
    Ok(rows)
}

/// Parse `key=v1,v2;key2=a,b` into axes.
pub fn parse_grid(spec: &str) -> Result<Vec<(String, Vec<String>)>> {
    let mut axes = Vec::new();
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, vs) = part.split_once('=').ok_or_else(|| Error::Config(format!("grid axis `{part}` needs key=values")))?;
        let vals: Vec<String> = vs.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if vals.is_empty() {
            return Err(Error::Config(format!("grid axis `{k}` has no values")));
        }
        axes.push((k.trim().to_string(), vals));
    }
    if axes.is_empty() {
        return Err(Error::Config("empty grid".into()));
    }
    Ok(axes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: Vec<(String, String)>,
    pub summary: McSummary,
}

/// Cartesian product of the axes, each cell run with `n_reps` seeds and the
/// given horizon.
pub fn sensitivity_sweep(
    base: &SimConfig,
    axes: &[(String, Vec<String>)],
    n_reps: usize,
    horizon: usize,
    base_seed: u64,
    parallel: usize,
) -> Result<Vec<SweepRow>> {
    if axes.is_empty() {
        return Err(Error::Config("empty grid".into()));
    }
    let mut cells: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (k, vals) in axes {
        cells = cells
            .into_iter()
            .flat_map(|c| {
                vals.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push((k.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    let mut rows = Vec::new();
    for cell in cells {
        let mut cfg = base.clone();
        cfg.env.horizon = horizon;
        for (k, v) in &cell {
            let key = if k == "r_int" { "env.r_cap" } else { k.as_str() };
            cfg.set(key, v)?;
        }
        let (summary, _) = monte_carlo(&cfg, n_reps, base_seed, parallel)?;
        rows.push(SweepRow { cell, summary });
    }
    Ok(rows)
}

/// Flat CSV record for one summary row; the leading label columns identify it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub label: String,
    pub n_runs: usize,
    pub p_no_breach: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub interception_rate: f64,
    pub breach_rate: f64,
    pub mean_breach_count: f64,
    pub mean_breach_time: Option<f64>,
    pub mean_intercept_distance: Option<f64>,
    pub kappa1_mean: Option<f64>,
    pub kappa1_median: Option<f64>,
    pub eta_bar: f64,
    pub p_min_hat: f64,
    pub theta_hat: f64,
    pub mean_edges: f64,
}

impl SummaryRecord {
    pub fn new(label: impl Into<String>, s: &McSummary) -> Self {
        SummaryRecord {
            label: label.into(),
            n_runs: s.n_runs,
            p_no_breach: s.p_no_breach,
            ci_low: s.ci_low,
            ci_high: s.ci_high,
            interception_rate: s.interception_rate,
            breach_rate: s.breach_rate,
            mean_breach_count: s.mean_breach_count,
            mean_breach_time: s.mean_breach_time,
            mean_intercept_distance: s.mean_intercept_distance,
            kappa1_mean: s.kappa1_mean,
            kappa1_median: s.kappa1_median,
            eta_bar: s.eta_bar,
            p_min_hat: s.p_min_hat,
            theta_hat: s.theta_hat,
            mean_edges: s.mean_edges,
        }
    }
}

pub fn emit_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Validation(e.to_string()))
}

pub fn parse_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

/// Ablation layout: regime, variant, then the summary columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRecord {
    pub regime: String,
    pub variant: String,
    pub p_no_breach: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_breach_count: f64,
    pub kappa1_mean: Option<f64>,
    pub kappa1_median: Option<f64>,
    pub theta_hat: f64,
    pub p_min_hat: f64,
    pub interception_rate: f64,
    pub mean_edges: f64,
}

impl From<&AblationRow> for AblationRecord {
    fn from(r: &AblationRow) -> Self {
        let s = &r.summary;
        AblationRecord {
            regime: r.regime.clone(),
            variant: r.variant.clone(),
            p_no_breach: s.p_no_breach,
            ci_low: s.ci_low,
            ci_high: s.ci_high,
            mean_breach_count: s.mean_breach_count,
            kappa1_mean: s.kappa1_mean,
            kappa1_median: s.kappa1_median,
            theta_hat: s.theta_hat,
            p_min_hat: s.p_min_hat,
            interception_rate: s.interception_rate,
            mean_edges: s.mean_edges,
        }
    }
}

/// Sweep layout: one column per axis is folded into `cell` as `k=v;k=v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub cell: String,
    pub p_no_breach: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_breach_count: f64,
    pub kappa1_mean: Option<f64>,
    pub theta_hat: f64,
    pub p_min_hat: f64,
    pub eta_bar: f64,
    pub mean_edges: f64,
}

impl From<&SweepRow> for SweepRecord {
    fn from(r: &SweepRow) -> Self {
        let s = &r.summary;
        SweepRecord {
            cell: r.cell.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";"),
            p_no_breach: s.p_no_breach,
            ci_low: s.ci_low,
            ci_high: s.ci_high,
            mean_breach_count: s.mean_breach_count,
            kappa1_mean: s.kappa1_mean,
            theta_hat: s.theta_hat,
            p_min_hat: s.p_min_hat,
            eta_bar: s.eta_bar,
            mean_edges: s.mean_edges,
        }
    }
}
