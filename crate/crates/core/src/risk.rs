//! Criticality stack: time-to-breach risk, boundary proximity, the three-zone
//! Markov breach chain and the fused current/future scores.

use crate::error::{Error, Result};
use crate::geometry::{dist_to_hard, zone_of, EnvConfig, Vec3, Zone};
use crate::graph::{build_graph, centralities, GraphParams};
use crate::kinematics::{nominal_attacker_guidance, step, time_to_breach, AgentClass, AgentState, BehaviorParams};
use crate::rng::{stream, Subsystem};
use crate::sensing::{sample_ellipsoid, DetectionReport};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskWeights {
    pub ttb: f64,
    pub cent: f64,
    pub dist: f64,
    pub mkv: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskParams {
    pub beta: f64,
    pub gamma_phi: f64,
    pub h_steps: usize,
    pub n_s: usize,
    pub eps_fail: f64,
    pub weights: RiskWeights,
    pub w_cur: f64,
    pub w_fut: f64,
    /// Cleared by ablations that skip a layer entirely.
    pub markov_enabled: bool,
    pub centrality_enabled: bool,
}

impl Default for RiskParams {
    fn default() -> Self {
        RiskParams {
            beta: 0.5,
            gamma_phi: 3.0,
            h_steps: 3,
            n_s: 500,
            eps_fail: 0.1,
            weights: RiskWeights { ttb: 0.35, cent: 0.2, dist: 0.25, mkv: 0.2 },
            w_cur: 0.7,
            w_fut: 0.3,
            markov_enabled: true,
            centrality_enabled: true,
        }
    }
}

impl RiskParams {
    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        let ok = self.beta > 0.0
            && self.gamma_phi > 0.0
            && self.h_steps >= 1
            && self.n_s >= 1
            && self.eps_fail > 0.0
            && self.eps_fail < 1.0
            && [w.ttb, w.cent, w.dist, w.mkv, self.w_cur, self.w_fut].iter().all(|&x| x >= 0.0)
            && (self.w_cur + self.w_fut - 1.0).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation("risk parameters out of range".into()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub p: [[f64; 3]; 3],
    pub zone: Zone,
}

impl TransitionMatrix {
    pub fn validate(&self) -> Result<()> {
        for (r, row) in self.p.iter().enumerate() {
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!("row {r} not stochastic: {row:?}")));
            }
        }
        if self.p[2] != [0.0, 0.0, 1.0] {
            return Err(Error::Validation("breach row must be absorbing".into()));
        }
        Ok(())
    }
}

pub fn ttb_risk(t: f64, beta: f64) -> f64 {
    if t.is_infinite() {
        0.0
    } else {
        1.0 / (1.0 + beta * t)
    }
}

pub fn distance_feature(d: &[f64]) -> Vec<f64> {
    let m = d.iter().copied().fold(0.0f64, f64::max);
    if m <= 0.0 {
        return vec![1.0; d.len()];
    }
    d.iter().map(|x| 1.0 - (x / m).min(1.0)).collect()
}

/// Empirical transition row for the occupied zone from ellipsoid samples
/// around the one-window prediction; the other transient row stays put.
pub fn estimate_transition<R: Rng>(
    rep: &DetectionReport,
    predicted_next: &Vec3,
    rp: &RiskParams,
    c0_sq: f64,
    env: &EnvConfig,
    rng: &mut R,
) -> Result<TransitionMatrix> {
    let zone = zone_of(&rep.mu, env);
    let mut p = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    if zone != Zone::Hard {
        let mut counts = [0usize; 3];
        let xs = sample_ellipsoid(rep, rp.n_s, c0_sq, rng)?;
        for x in &xs {
            let q = [predicted_next[0] + x[0], predicted_next[1] + x[1], predicted_next[2] + x[2]];
            counts[zone_of(&q, env).index()] += 1;
        }
        let n = xs.len() as f64;
        p[zone.index()] = [counts[0] as f64 / n, counts[1] as f64 / n, counts[2] as f64 / n];
    }
    Ok(TransitionMatrix { p, zone })
}

pub fn missed_detection_adjust(m: &TransitionMatrix, eps_fail: f64) -> TransitionMatrix {
    let mut out = m.clone();
    let p12 = (m.p[1][2] + eps_fail).min(1.0);
    out.p[1] = [0.0, 1.0 - p12, p12];
    out
}

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub fn matrix_power(p: &[[f64; 3]; 3], h: usize) -> [[f64; 3]; 3] {
    let mut acc = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..h {
        acc = matmul(&acc, p);
    }
    acc
}

pub fn breach_probability(m: &TransitionMatrix, h: usize) -> f64 {
    matrix_power(&m.p, h)[m.zone.index()][2].clamp(0.0, 1.0)
}

pub fn markov_risk(p_br: f64, gamma_phi: f64) -> f64 {
    1.0 - (-gamma_phi * p_br).exp()
}

/// Per-attacker features in [0,1], aligned by index.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub r_ttb: Vec<f64>,
    pub d: Vec<f64>,
    pub c_cent: Vec<f64>,
    pub r_mkv: Vec<f64>,
    pub s_conf: Vec<f64>,
}

pub fn combined_criticality(f: &Features, w: &RiskWeights) -> Vec<f64> {
    (0..f.r_ttb.len())
        .map(|i| f.s_conf[i] * (w.ttb * f.r_ttb[i] + w.cent * f.c_cent[i] + w.dist * f.d[i] + w.mkv * f.r_mkv[i]))
        .collect()
}

pub fn mix_scores(c_comb: &[f64], c_fut: &[f64], rp: &RiskParams) -> Vec<f64> {
    c_comb.iter().zip(c_fut).map(|(c, f)| rp.w_cur * c + rp.w_fut * f).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CriticalityBundle {
    pub ids: Vec<usize>,
    pub ttb: Vec<f64>,
    pub features: Features,
    pub c_comb: Vec<f64>,
    pub c_fut: Vec<f64>,
    pub c_assign: Vec<f64>,
    /// Edge count of the current uncertainty graph.
    pub edges: usize,
}

/// An attacker as the defense sees it: the report plus a reconstructed
/// kinematic state (estimated heading and speed).
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub report: DetectionReport,
    pub state: AgentState,
}

/// Everything the criticality evaluation needs besides the estimates.
pub struct RiskContext<'a> {
    pub env: &'a EnvConfig,
    pub class: &'a AgentClass,
    pub behavior: &'a BehaviorParams,
    pub graph: &'a GraphParams,
    pub risk: &'a RiskParams,
    pub c0_sq: f64,
    pub max_ttb: f64,
    /// Seed and window index keying the per-attacker Markov streams.
    pub seed: u64,
    pub window: u64,
}

pub fn propagate_nominal(s: &AgentState, windows: usize, ctx: &RiskContext) -> AgentState {
    let mut cur = s.clone();
    for _ in 0..windows {
        let u = nominal_attacker_guidance(&cur, ctx.env, ctx.class, ctx.behavior);
        cur = step(&cur, &u, ctx.env.dt, ctx.env);
    }
    cur
}

fn features(ests: &[Estimate], ctx: &RiskContext, want_graph: bool) -> Result<(Vec<f64>, Features, usize)> {
    let rp = ctx.risk;
    let ttb: Vec<f64> = ests.iter().map(|e| time_to_breach(&e.state, ctx.env, ctx.class, ctx.behavior, ctx.max_ttb)).collect();
    let r_ttb = ttb.iter().map(|&t| ttb_risk(t, rp.beta)).collect();
    let dists: Vec<f64> = ests.iter().map(|e| dist_to_hard(&e.report.mu, ctx.env)).collect();
    let mut edges = 0;
    let c_cent = if rp.centrality_enabled || want_graph {
        let reps: Vec<DetectionReport> = ests.iter().map(|e| e.report.clone()).collect();
        let g = build_graph(&reps, ctx.graph, ctx.env);
        edges = g.edge_count();
        if rp.centrality_enabled {
            centralities(&g, ctx.graph).composite
        } else {
            vec![0.0; ests.len()]
        }
    } else {
        vec![0.0; ests.len()]
    };
    let mut r_mkv = vec![0.0; ests.len()];
    if rp.markov_enabled {
        for (i, e) in ests.iter().enumerate() {
            let next = propagate_nominal(&e.state, 1, ctx).p;
            let mut rng = stream(ctx.seed, Subsystem::Markov, e.report.id as u64, ctx.window);
            let tm = estimate_transition(&e.report, &next, rp, ctx.c0_sq, ctx.env, &mut rng)?;
            r_mkv[i] = markov_risk(breach_probability(&tm, rp.h_steps), rp.gamma_phi);
        }
    }
    let s_conf = ests.iter().map(|e| e.report.s_conf).collect();
    Ok((ttb, Features { r_ttb, d: distance_feature(&dists), c_cent, r_mkv, s_conf }, edges))
}

/// Current and predicted criticality for the detected set.
pub fn criticality_bundle(ests: &[Estimate], ctx: &RiskContext) -> Result<CriticalityBundle> {
    let rp = ctx.risk;
    let (ttb, feat, edges) = features(ests, ctx, true)?;
    let c_comb = combined_criticality(&feat, &rp.weights);
    let c_fut = if rp.w_fut > 0.0 {
        let future: Vec<Estimate> = ests
            .iter()
            .map(|e| {
                let state = propagate_nominal(&e.state, rp.h_steps, ctx);
                let mut report = e.report.clone();
                report.mu = state.p;
                Estimate { report, state }
            })
            .collect();
        combined_criticality(&features(&future, ctx, false)?.1, &rp.weights)
    } else {
        c_comb.clone()
    };
    let c_assign = mix_scores(&c_comb, &c_fut, rp);
    Ok(CriticalityBundle { ids: ests.iter().map(|e| e.report.id).collect(), ttb, features: feat, c_comb, c_fut, c_assign, edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::isotropic;
    use proptest::prelude::*;

    fn rep(mu: Vec3, var: f64) -> DetectionReport {
        DetectionReport { id: 0, mu, sigma: isotropic(var), p_d: 1.0, detected: true, s_conf: 1.0 }
    }

    #[test]
    fn ttb_risk_examples() {
        assert_eq!(ttb_risk(0.0, 0.5), 1.0);
        assert_eq!(ttb_risk(1.0, 1.0), 0.5);
        assert_eq!(ttb_risk(f64::INFINITY, 0.5), 0.0);
        let v: Vec<f64> = (0..=100).map(|t| ttb_risk(t as f64, 0.5)).collect();
        assert!(v.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn distance_feature_examples() {
        assert_eq!(distance_feature(&[10.0, 20.0]), vec![0.5, 0.0]);
        assert_eq!(distance_feature(&[7.0]), vec![0.0]);
        assert_eq!(distance_feature(&[0.0, 0.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn point_mass_transitions() {
        let env = EnvConfig::default();
        let rp = RiskParams::default();
        let mut rng = stream(0, Subsystem::Markov, 0, 0);
        let r = rep([12.0, 0.0, 10.0], 0.0);
        let t = estimate_transition(&r, &[9.0, 0.0, 10.0], &rp, 7.8147, &env, &mut rng).unwrap();
        assert_eq!(t.p[1], [0.0, 0.0, 1.0]);
        let t = estimate_transition(&r, &[12.5, 0.0, 10.0], &rp, 7.8147, &env, &mut rng).unwrap();
        assert_eq!(t.p[1], [0.0, 1.0, 0.0]);
        t.validate().unwrap();
    }

    /// Fraction of the uniform ball of radius R centered at planar offset c from
    /// the axis lying inside the infinite cylinder rho <= r_hard, by a fine
    /// deterministic lattice.
    fn ball_fraction_in_cylinder(cx: f64, radius: f64, r_hard: f64) -> f64 {
        let n = 160;
        let (mut inside, mut total) = (0usize, 0usize);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let f = |a: usize| -radius + (a as f64 + 0.5) * 2.0 * radius / n as f64;
                    let (x, y, z) = (f(i), f(j), f(k));
                    if x * x + y * y + z * z <= radius * radius {
                        total += 1;
                        if (cx + x).hypot(y) <= r_hard {
                            inside += 1;
                        }
                    }
                }
            }
        }
        inside as f64 / total as f64
    }

    #[test]
    fn straddling_ellipsoid_fraction() {
        let env = EnvConfig::default();
        let rp = RiskParams { n_s: 5000, ..Default::default() };
        let sig = 1.0;
        let r = rep([11.0, 0.0, 10.0], sig * sig);
        let next = [10.5, 0.0, 10.0];
        let mut rng = stream(5, Subsystem::Markov, 1, 1);
        let t = estimate_transition(&r, &next, &rp, 7.8147, &env, &mut rng).unwrap();
        let exact = ball_fraction_in_cylinder(10.5, 7.8147f64.sqrt() * sig, env.r_hard);
        assert!((t.p[1][2] - exact).abs() < 0.03, "{} vs {exact}", t.p[1][2]);
    }

    #[test]
    fn missed_detection_examples() {
        let m = TransitionMatrix { p: [[1.0, 0.0, 0.0], [0.1, 0.7, 0.2], [0.0, 0.0, 1.0]], zone: Zone::Soft };
        let a = missed_detection_adjust(&m, 0.1);
        assert!((a.p[1][2] - 0.3).abs() < 1e-15 && (a.p[1][1] - 0.7).abs() < 1e-15 && a.p[1][0] == 0.0);
        let m = TransitionMatrix { p: [[1.0, 0.0, 0.0], [0.0, 0.05, 0.95], [0.0, 0.0, 1.0]], zone: Zone::Soft };
        let a = missed_detection_adjust(&m, 0.1);
        assert_eq!(a.p[1], [0.0, 0.0, 1.0]);
        let m = TransitionMatrix { p: [[1.0, 0.0, 0.0], [0.0, 0.6, 0.4], [0.0, 0.0, 1.0]], zone: Zone::Soft };
        assert_eq!(missed_detection_adjust(&m, 0.0), m);
    }

    #[test]
    fn breach_probability_examples() {
        let m = TransitionMatrix { p: [[0.5, 0.4, 0.1], [0.2, 0.5, 0.3], [0.0, 0.0, 1.0]], zone: Zone::Hard };
        for h in 1..10 {
            assert_eq!(breach_probability(&m, h), 1.0);
        }
        let m = TransitionMatrix { zone: Zone::Soft, ..m };
        assert_eq!(breach_probability(&m, 1), 0.3);
    }

    #[test]
    fn markov_risk_examples() {
        assert_eq!(markov_risk(0.0, 3.0), 0.0);
        assert!((markov_risk(1.0, 1.0) - 0.632_120_558_8).abs() < 1e-9);
        assert!(markov_risk(0.3, 3.0) < markov_risk(0.31, 3.0));
    }

    #[test]
    fn combined_examples() {
        let f = Features { r_ttb: vec![1.0], d: vec![1.0], c_cent: vec![1.0], r_mkv: vec![1.0], s_conf: vec![1.0] };
        let w = RiskWeights { ttb: 0.25, cent: 0.25, dist: 0.25, mkv: 0.25 };
        assert_eq!(combined_criticality(&f, &w), vec![1.0]);
        let half = Features { s_conf: vec![0.5], ..f };
        assert_eq!(combined_criticality(&half, &w), vec![0.5]);
        let rp = RiskParams { w_cur: 0.5, w_fut: 0.5, ..Default::default() };
        assert!((mix_scores(&[0.4], &[0.8], &rp)[0] - 0.6).abs() < 1e-15);
    }

    fn ctx_parts() -> (EnvConfig, AgentClass, BehaviorParams, GraphParams) {
        (EnvConfig::default(), AgentClass::attacker_default(), BehaviorParams::default(), GraphParams::default())
    }

    fn est(id: usize, p: Vec3, psi: f64, v: f64) -> Estimate {
        let mut report = rep(p, 1.0);
        report.id = id;
        Estimate { report, state: AgentState::new(p, psi, v) }
    }

    #[test]
    fn stationary_world_future_equals_current() {
        let (env, class, beh, gp) = ctx_parts();
        let rp = RiskParams::default();
        let ctx = RiskContext { env: &env, class: &class, behavior: &beh, graph: &gp, risk: &rp, c0_sq: 7.8147, max_ttb: 1000.0, seed: 3, window: 4 };
        let ests = vec![est(0, [12.0, 0.0, 10.0], std::f64::consts::PI, 0.0), est(1, [13.0, 1.0, 10.0], 3.0, 0.0), est(2, [30.0, 5.0, 10.0], 0.0, 0.0)];
        let b = criticality_bundle(&ests, &ctx).unwrap();
        assert_eq!(b.c_fut, b.c_comb);
        assert!(b.c_comb.iter().all(|c| (0.0..=1.0).contains(c)));
    }

    #[test]
    fn zero_future_weight_gives_current() {
        let (env, class, beh, gp) = ctx_parts();
        let rp = RiskParams { w_cur: 1.0, w_fut: 0.0, ..Default::default() };
        let ctx = RiskContext { env: &env, class: &class, behavior: &beh, graph: &gp, risk: &rp, c0_sq: 7.8147, max_ttb: 1000.0, seed: 3, window: 4 };
        let ests = vec![est(0, [20.0, 0.0, 10.0], std::f64::consts::PI, 1.0), est(1, [14.0, 4.0, 10.0], 3.0, 0.7)];
        let b = criticality_bundle(&ests, &ctx).unwrap();
        assert_eq!(b.c_assign, b.c_comb);
    }

    fn stochastic_row(a: f64, b: f64) -> [f64; 3] {
        let (lo, hi) = (a.min(b), a.max(b));
        [lo, hi - lo, 1.0 - hi]
    }

    proptest! {
        #[test]
        fn breach_probability_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, d in 0.0f64..1.0, z in 0usize..3) {
            let m = TransitionMatrix {
                p: [stochastic_row(a, b), stochastic_row(c, d), [0.0, 0.0, 1.0]],
                zone: [Zone::Outside, Zone::Soft, Zone::Hard][z],
            };
            let v: Vec<f64> = (1..=20).map(|h| breach_probability(&m, h)).collect();
            prop_assert!(v.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        }

        #[test]
        fn ranking_invariant_to_weight_scaling(
            xs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.05f64..1.0), 2..8),
            k in 0.1f64..10.0,
        ) {
            let f = Features {
                r_ttb: xs.iter().map(|x| x.0).collect(),
                d: xs.iter().map(|x| x.1).collect(),
                c_cent: xs.iter().map(|x| x.2).collect(),
                r_mkv: xs.iter().map(|x| x.3).collect(),
                s_conf: xs.iter().map(|x| x.4).collect(),
            };
            let w = RiskParams::default().weights;
            let w2 = RiskWeights { ttb: w.ttb * k, cent: w.cent * k, dist: w.dist * k, mkv: w.mkv * k };
            let argsort = |v: Vec<f64>| { let mut i: Vec<usize> = (0..v.len()).collect(); i.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b))); i };
            let (a, b) = (combined_criticality(&f, &w), combined_criticality(&f, &w2));
            for (x, s) in a.iter().zip(&f.s_conf) {
                prop_assert!(*x <= s * (w.ttb + w.cent + w.dist + w.mkv) + 1e-12);
            }
            // scaling may introduce rounding ties; compare rank with tolerance
            let (ia, ib) = (argsort(a.clone()), argsort(b.clone()));
            for (p, q) in ia.iter().zip(&ib) {
                prop_assert!(p == q || (a[*p] - a[*q]).abs() < 1e-12);
            }
        }
    }
}
