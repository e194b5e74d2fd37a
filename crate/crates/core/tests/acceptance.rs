//! Acceptance suite: one PASS/FAIL line per criterion. With
//! ACCEPTANCE_STRICT=1 the process exits nonzero when any criterion fails.

use cridaa::config::{Regime, SimConfig};
use cridaa::engagement::{solve_lsap, tube_check};
use cridaa::experiments::{ci_normal, drift_diagnostics, run_batch, summarize, CiMethod};
use cridaa::geometry::EnvConfig;
use cridaa::graph::{laplacian, overlap_coefficient};
use cridaa::kinematics::{AgentClass, AgentState, ControlInput};
use cridaa::risk::{breach_probability, missed_detection_adjust, TransitionMatrix};
use cridaa::safety::{attacker_filter, defender_filter, discrete_barrier_rate, BarrierParams};
use cridaa::sensing::isotropic;
use cridaa::sim::{apply_variant, RunLog, Variant};
use cridaa::geometry::Zone;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::process::Command;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn c1(logs: &[RunLog], secs: f64) -> Outcome {
    let s = summarize(logs, CiMethod::Normal).unwrap();
    Outcome {
        pass: s.interception_rate >= 0.95 && s.breach_rate <= 0.05 && secs < 300.0,
        detail: format!("interception {:.3}, breach {:.3} over {} runs in {secs:.1}s", s.interception_rate, s.breach_rate, s.n_runs),
    }
}

fn c2(logs: &[RunLog], secs: f64) -> Outcome {
    let s = summarize(logs, CiMethod::Normal).unwrap();
    let d = s.mean_intercept_distance.unwrap_or(f64::NAN);
    Outcome {
        pass: (0.75..=0.95).contains(&s.interception_rate) && (3.0..=7.0).contains(&d) && secs < 1200.0,
        detail: format!("interception {:.3}, mean capture distance {d:.2} u over {} runs in {secs:.1}s", s.interception_rate, s.n_runs),
    }
}

fn c3() -> Outcome {
    let (lo, hi) = ci_normal(0.23, 100);
    Outcome {
        pass: (lo - 0.147).abs() <= 1e-3 && (hi - 0.313).abs() <= 1e-3,
        detail: format!("[{lo:.4}, {hi:.4}]"),
    }
}

fn c4() -> Outcome {
    let base = Regime::Nominal.apply(&SimConfig::default());
    let full = run_batch(&base, 200, 0, threads()).unwrap();
    let greedy = run_batch(&apply_variant(&base, Variant::GreedyAssign), 200, 0, threads()).unwrap();
    let pf = summarize(&full, CiMethod::Normal).unwrap().p_no_breach;
    let pg = summarize(&greedy, CiMethod::Normal).unwrap().p_no_breach;
    Outcome { pass: pg <= pf - 0.05, detail: format!("P(no breach) FULL {pf:.3}, GREEDY_ASSIGN {pg:.3}, gap {:.3}", pf - pg) }
}

fn brute_force(cost: &[Vec<f64>]) -> f64 {
    let (r, c) = (cost.len(), cost[0].len());
    fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, k: usize, acc: f64, best: &mut f64) {
        let (r, c) = (cost.len(), cost[0].len());
        if k == r.min(c) {
            *best = best.min(acc);
            return;
        }
        if row == r {
            return;
        }
        // rows may be skipped only when there are more rows than columns
        if r - row > r.min(c) - k {
            rec(cost, row + 1, used, k, acc, best);
        }
        for j in 0..c {
            if !used[j] {
                used[j] = true;
                rec(cost, row + 1, used, k + 1, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(cost, 0, &mut vec![false; c], 0, 0.0, &mut best);
    let _ = r;
    best
}

fn c5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = 0;
    for _ in 0..1000 {
        let (r, c) = (rng.random_range(1..=7), rng.random_range(1..=7));
        let cost: Vec<Vec<f64>> = (0..r).map(|_| (0..c).map(|_| rng.random_range(0..100) as f64).collect()).collect();
        let m = solve_lsap(&cost);
        let got: f64 = m.iter().map(|&(i, j)| cost[i][j]).sum();
        if m.len() != r.min(c) || got != brute_force(&cost) {
            bad += 1;
        }
    }
    Outcome { pass: bad == 0, detail: format!("{bad} mismatches in 1000 matrices up to 7x7") }
}

fn c6() -> Outcome {
    let sigma = 2.0;
    let mut worst = 0.0f64;
    for ratio in [0.0, 1.0, 2.0, 4.0] {
        let d = ratio * sigma;
        let got = overlap_coefficient(&[0.0; 3], &isotropic(sigma * sigma), &[d, 0.0, 0.0], &isotropic(sigma * sigma), 41);
        let want = 2.0 * cridaa::sensing::q_function(d / (2.0 * sigma));
        worst = worst.max((got - want).abs());
    }
    Outcome { pass: worst <= 0.02, detail: format!("max abs error {worst:.4}") }
}

fn random_row<R: Rng>(rng: &mut R) -> [f64; 3] {
    let x: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let s: f64 = x.iter().sum();
    [x[0] / s, x[1] / s, 1.0 - x[0] / s - x[1] / s]
}

fn c7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut bad = 0;
    for _ in 0..10_000 {
        let zone = if rng.random_bool(0.5) { Zone::Outside } else { Zone::Soft };
        let m = TransitionMatrix { p: [random_row(&mut rng), random_row(&mut rng), [0.0, 0.0, 1.0]], zone };
        let adj = missed_detection_adjust(&m, rng.random_range(0.0..0.5));
        let stochastic = [&m, &adj].iter().all(|t| t.p.iter().all(|r| (r.iter().sum::<f64>() - 1.0).abs() <= 1e-9 && r.iter().all(|&x| x >= 0.0)));
        let absorbing = adj.p[2] == [0.0, 0.0, 1.0];
        let mono = (1..20).all(|h| breach_probability(&m, h + 1) >= breach_probability(&m, h) - 1e-15);
        if !(stochastic && absorbing && mono) {
            bad += 1;
        }
    }
    Outcome { pass: bad == 0, detail: format!("{bad} violations in 10^4 matrices") }
}

fn c8() -> Outcome {
    let env = EnvConfig::default();
    let bp = BarrierParams { lambda_min: 0.0, ..BarrierParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut violations, mut moved, mut feasible) = (0, 0, 0);
    for k in 0..1000 {
        let defenders = k % 2 == 1;
        let class = if defenders { AgentClass::defender_default() } else { AgentClass::attacker_default() };
        let (r_col, kappa) = if defenders { (env.r_col_d, bp.kappa_d) } else { (env.r_col, bp.kappa_col) };
        let reach = class.v_hi + class.w_bar;
        let a = AgentState::new([0.0, 0.0, 10.0], rng.random_range(-PI..PI), rng.random_range(class.v_lo..=class.v_hi));
        let (ang, d) = (rng.random_range(-PI..PI), rng.random_range(1.2 * r_col..3.0 * reach));
        let b = AgentState::new(
            [d * ang.cos(), d * ang.sin(), 10.0 + rng.random_range(-1.0..1.0)],
            rng.random_range(-PI..PI),
            rng.random_range(class.v_lo..=class.v_hi),
        );
        let nom: Vec<ControlInput> = (0..2)
            .map(|_| ControlInput {
                omega: rng.random_range(-class.omega_bar..=class.omega_bar),
                w: rng.random_range(-class.w_bar..=class.w_bar),
            })
            .collect();
        let st = vec![a, b];
        let out = if defenders {
            defender_filter(&st, &nom, &class, &bp, &env, 10)
        } else {
            attacker_filter(&st, &nom, &class, &bp, &env, 10)
        };
        let nominal_ok = discrete_barrier_rate(&st[0], &nom[0], &st[1], &nom[1], r_col, kappa, &env, 10) >= 0.0;
        if nominal_ok && out.inputs != nom {
            moved += 1;
        }
        if out.feasible {
            feasible += 1;
            let r = discrete_barrier_rate(&st[0], &out.inputs[0], &st[1], &out.inputs[1], r_col, kappa, &env, 10);
            if r < -1e-3 {
                violations += 1;
            }
        }
    }
    Outcome {
        pass: violations == 0 && moved == 0,
        detail: format!("{feasible} feasible scenes, {violations} barrier violations, {moved} feasible nominals modified"),
    }
}

fn c9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut bad = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=12);
        let density = rng.random_range(0.0..1.0);
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(density) {
                    let w: f64 = rng.random_range(0.0..1.0);
                    a[(i, j)] = w;
                    a[(j, i)] = w;
                }
            }
        }
        let l = laplacian(&a);
        let sym = (0..n).all(|i| (0..n).all(|j| l[(i, j)] == l[(j, i)]));
        let rows = (0..n).all(|i| l.row(i).sum().abs() <= 1e-9);
        let lam = SymmetricEigen::new(l).eigenvalues.min();
        if !(sym && rows && lam >= -1e-9) {
            bad += 1;
        }
    }
    Outcome { pass: bad == 0, detail: format!("{bad} violations in 1000 graphs") }
}

fn c10(logs: &[RunLog]) -> Outcome {
    let d = drift_diagnostics(logs).unwrap();
    let worst = d.tail.iter().take(11).map(|&(_, e, b)| e - 1.5 * b).fold(f64::NEG_INFINITY, f64::max);
    Outcome {
        pass: worst <= 0.0,
        detail: format!(
            "p_min_hat {:.4}{}, max over n<=10 of survival - 1.5*bound = {worst:.3}",
            d.p_min_hat,
            if d.floored { " (floored)" } else { "" }
        ),
    }
}

fn bookkeeping(logs: &[RunLog]) -> usize {
    let mut bad = 0;
    for l in logs {
        for w in l.windows.windows(2) {
            if w[1].live + w[0].captures.len() + w[0].breaches.len() != w[0].live {
                bad += 1;
            }
        }
        if let Some(last) = l.windows.last() {
            let end = last.live - last.captures.len() - last.breaches.len();
            if end != l.survivors() && !l.windows.is_empty() && l.n_attackers > 0 {
                bad += 1;
            }
        }
    }
    bad
}

fn c11(det: &[RunLog], prob: &[RunLog]) -> Outcome {
    let bad = bookkeeping(det) + bookkeeping(prob);
    let bin = env!("CARGO_BIN_EXE_cridaa");
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("p{k}"));
        let st = Command::new(bin).args(["run", "--seed", "11", "--out"]).arg(&out).status().unwrap();
        assert!(st.success());
        outputs.push(std::fs::read(out.join("run_11.jsonl")).unwrap());
    }
    let cross_process = outputs[0] == outputs[1];
    let cfg = SimConfig::default();
    let a: String = run_batch(&cfg, 16, 100, 1).unwrap().iter().map(RunLog::to_jsonl).collect();
    let b: String = run_batch(&cfg, 16, 100, 8).unwrap().iter().map(RunLog::to_jsonl).collect();
    Outcome {
        pass: bad == 0 && cross_process && a == b,
        detail: format!("{bad} bookkeeping violations, two-process identical {cross_process}, widths 1 vs 8 identical {}", a == b),
    }
}

fn c12() -> Outcome {
    let (r_cap, r_t) = (1.5, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut missed, mut bad_setup) = (0, 0);
    for _ in 0..10_000 {
        // straight relative pass whose closest sampled point lies inside the eroded ball
        let miss = rng.random_range(0.0..=r_cap - r_t);
        let speed = rng.random_range(0.5..5.0);
        let k0 = rng.random_range(1..400) as f64;
        let nominal: Vec<[f64; 3]> = (0..=400).map(|k| [speed * (k as f64 - k0) * 0.05, miss, 0.0]).collect();
        let realized: Vec<[f64; 3]> = nominal
            .iter()
            .map(|p| {
                let dir: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt().max(1e-12);
                let m = rng.random_range(0.0..=r_t);
                [p[0] + m * dir[0] / n, p[1] + m * dir[1] / n, p[2] + m * dir[2] / n]
            })
            .collect();
        let (adm, tube, captured) = tube_check(&nominal, &realized, r_cap, r_t);
        if !(adm && tube) {
            bad_setup += 1;
        } else if !captured {
            missed += 1;
        }
    }
    Outcome {
        pass: missed == 0 && bad_setup == 0,
        detail: format!("{missed} of 10^4 tube events without capture, {bad_setup} malformed trials"),
    }
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();

    let t = Instant::now();
    let det = run_batch(&SimConfig::deterministic(), 500, 0, threads()).unwrap();
    results.push((1, "deterministic scenario", c1(&det, t.elapsed().as_secs_f64())));

    let t = Instant::now();
    let prob = run_batch(&SimConfig::probabilistic(), 500, 0, threads()).unwrap();
    results.push((2, "probabilistic scenario", c2(&prob, t.elapsed().as_secs_f64())));

    results.push((3, "CI reproduction", c3()));
    results.push((4, "ablation direction", c4()));
    results.push((5, "LSAP vs brute force", c5()));
    results.push((6, "overlap coefficient", c6()));
    results.push((7, "Markov layer", c7()));
    results.push((8, "safety filter", c8()));
    results.push((9, "Laplacian suite", c9()));
    results.push((10, "first-capture tail", c10(&prob)));
    results.push((11, "bookkeeping and determinism", c11(&det, &prob)));
    results.push((12, "robust capture under tube event", c12()));

    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n:>2} {:<4} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
