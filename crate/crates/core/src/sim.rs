//! The windowed closed loop: sense, graph, criticality, assign, filter,
//! execute, log.

use crate::config::SimConfig;
use crate::engagement::{
    admissible_domain, build_cost, pair_geometry, regulate_switching, solve_greedy, solve_lsap, strip_sentinels,
    AssignMode, PairGeometry,
};
use crate::error::{Error, Result};
use crate::geometry::{dist, dist_to_hard, in_hard, sub, Vec3};
use crate::kinematics::{
    behavior_input, heading_error, saturate, step, AgentState, BehaviorMode, BehaviorTag, ControlInput,
};
use crate::risk::{
    breach_probability, criticality_bundle, estimate_transition, markov_risk, missed_detection_adjust, propagate_nominal,
    Estimate, RiskContext,
};
use crate::rng::{stream, Subsystem};
use crate::safety::{attacker_filter, defender_filter};
use crate::sensing::{sense, DetectionReport};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::str::FromStr;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Capture {
    pub defender: usize,
    pub attacker: usize,
    pub dist_to_hard: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStat {
    pub defender: usize,
    pub attacker: usize,
    pub success: bool,
    pub min_dist: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub k: usize,
    pub t_k: f64,
    /// Live attackers at the start of the window.
    pub live: usize,
    pub n_detected: usize,
    pub m_k: usize,
    pub c_k: usize,
    pub eta_k: f64,
    pub switches: usize,
    pub captures: Vec<Capture>,
    pub breaches: Vec<usize>,
    pub if_k: bool,
    pub qp_infeasible_attacker: bool,
    pub qp_infeasible_defender: bool,
    pub pairs: Vec<PairStat>,
    pub edges: usize,
    /// Missed-detection-adjusted breach probability of tracked but unseen attackers.
    pub tracked_unseen: Vec<(usize, f64)>,
}

impl WindowRecord {
    /// Executed-engagement success fraction, defined when m_k > 0.
    pub fn success_fraction(&self) -> Option<f64> {
        if self.m_k == 0 {
            None
        } else {
            Some(self.pairs.iter().filter(|p| p.success).count() as f64 / self.m_k as f64)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub seed: u64,
    pub config_digest: String,
    pub n_attackers: usize,
    pub n_defenders: usize,
    pub windows: Vec<WindowRecord>,
    pub tau1: Option<usize>,
    pub kappa1: Option<usize>,
    pub t0: Option<usize>,
    pub neutralized: usize,
    pub breach_count: usize,
    pub mean_intercept_distance: Option<f64>,
    /// Excluded from serialization so logs stay byte-deterministic.
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header { seed: u64, config_digest: String, n_attackers: usize, n_defenders: usize },
    Window(WindowRecord),
    Summary {
        tau1: Option<usize>,
        kappa1: Option<usize>,
        t0: Option<usize>,
        neutralized: usize,
        breach_count: usize,
        survivors: usize,
        mean_intercept_distance: Option<f64>,
    },
}

impl RunLog {
    pub fn survivors(&self) -> usize {
        self.n_attackers - self.neutralized - self.breach_count
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |l: &Line| {
            out.push_str(&serde_json::to_string(l).expect("log lines serialize"));
            out.push('\n');
        };
        push(&Line::Header {
            seed: self.seed,
            config_digest: self.config_digest.clone(),
            n_attackers: self.n_attackers,
            n_defenders: self.n_defenders,
        });
        for w in &self.windows {
            push(&Line::Window(w.clone()));
        }
        push(&Line::Summary {
            tau1: self.tau1,
            kappa1: self.kappa1,
            t0: self.t0,
            neutralized: self.neutralized,
            breach_count: self.breach_count,
            survivors: self.survivors(),
            mean_intercept_distance: self.mean_intercept_distance,
        });
        out
    }

    /// Parse one run from its JSONL form.
    pub fn from_jsonl(text: &str) -> Result<RunLog> {
        let mut log: Option<RunLog> = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str::<Line>(line)? {
                Line::Header { seed, config_digest, n_attackers, n_defenders } => {
                    log = Some(RunLog {
                        seed,
                        config_digest,
                        n_attackers,
                        n_defenders,
                        windows: Vec::new(),
                        tau1: None,
                        kappa1: None,
                        t0: None,
                        neutralized: 0,
                        breach_count: 0,
                        mean_intercept_distance: None,
                        wall_time_s: 0.0,
                    })
                }
                Line::Window(w) => log.as_mut().ok_or_else(|| Error::Validation("window before header".into()))?.windows.push(w),
                Line::Summary { tau1, kappa1, t0, neutralized, breach_count, mean_intercept_distance, .. } => {
                    let l = log.as_mut().ok_or_else(|| Error::Validation("summary before header".into()))?;
                    l.tau1 = tau1;
                    l.kappa1 = kappa1;
                    l.t0 = t0;
                    l.neutralized = neutralized;
                    l.breach_count = breach_count;
                    l.mean_intercept_distance = mean_intercept_distance;
                }
            }
        }
        log.ok_or_else(|| Error::Validation("empty log".into()))
    }

    /// Split a multi-run JSONL stream (concatenated runs) into logs.
    pub fn parse_many(text: &str) -> Result<Vec<RunLog>> {
        let mut runs = Vec::new();
        let mut cur = String::new();
        for line in text.lines() {
            if line.contains("\"type\":\"header\"") && !cur.is_empty() {
                runs.push(RunLog::from_jsonl(&cur)?);
                cur.clear();
            }
            cur.push_str(line);
            cur.push('\n');
        }
        if !cur.trim().is_empty() {
            runs.push(RunLog::from_jsonl(&cur)?);
        }
        Ok(runs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Full,
    NoMarkov,
    NoSwitch,
    DetGraph,
    NoCentrality,
    GreedyAssign,
    TimeOnly,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Full,
        Variant::NoMarkov,
        Variant::NoSwitch,
        Variant::DetGraph,
        Variant::NoCentrality,
        Variant::GreedyAssign,
        Variant::TimeOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "FULL",
            Variant::NoMarkov => "NO_MARKOV",
            Variant::NoSwitch => "NO_SWITCH",
            Variant::DetGraph => "DET_GRAPH",
            Variant::NoCentrality => "NO_CENTRALITY",
            Variant::GreedyAssign => "GREEDY_ASSIGN",
            Variant::TimeOnly => "TIME_ONLY",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown variant `{s}`")))
    }
}

pub fn apply_variant(cfg: &SimConfig, v: Variant) -> SimConfig {
    let mut c = cfg.clone();
    match v {
        Variant::Full => {}
        Variant::NoMarkov => {
            c.risk.weights.mkv = 0.0;
            c.risk.markov_enabled = false;
        }
        Variant::NoSwitch => c.assign.switching_enabled = false,
        Variant::DetGraph => c.graph.mode = crate::graph::GraphMode::Proximity,
        Variant::NoCentrality => {
            c.risk.weights.cent = 0.0;
            c.risk.centrality_enabled = false;
        }
        Variant::GreedyAssign => c.assign.mode = AssignMode::Greedy,
        Variant::TimeOnly => {
            c.assign.w_c = 0.0;
            c.risk.weights.cent = 0.0;
            c.risk.weights.dist = 0.0;
            c.risk.weights.mkv = 0.0;
        }
    }
    c
}

/// What the defense remembers about an attacker between windows.
#[derive(Clone, Debug)]
struct Track {
    report: DetectionReport,
    last_seen: usize,
    /// Propagated state while unseen.
    state: AgentState,
}

fn behavior_for(cfg: &SimConfig, i: usize, phi: f64) -> BehaviorMode {
    let tag = match cfg.behavior_mode {
        Some(t) => t,
        None => [BehaviorTag::BiasedRandom, BehaviorTag::Sinusoidal, BehaviorTag::Flanking, BehaviorTag::Random][i % 4],
    };
    BehaviorMode { tag, phi }
}

/// Reconstruct heading, planar speed and 3D velocity from successive estimates.
fn estimate_state(cfg: &SimConfig, rep: &DetectionReport, prev: Option<(&Vec3, usize)>, k: usize) -> (AgentState, Vec3) {
    let cls = &cfg.attacker;
    let dt = cfg.env.dt;
    match prev {
        Some((p0, k0)) if k0 < k => {
            let span = (k - k0) as f64 * dt;
            let d = sub(&rep.mu, p0);
            let (vx, vy) = (d[0] / span, d[1] / span);
            let vz = (d[2] / span).clamp(-cls.w_bar, cls.w_bar);
            let planar = vx.hypot(vy);
            let psi = if planar > 0.0 { vy.atan2(vx) } else { 0.0 };
            let v = planar.clamp(cls.v_lo, cls.v_hi);
            let s = AgentState::new(rep.mu, psi, v);
            (s, [v * psi.cos(), v * psi.sin(), vz])
        }
        _ => {
            // No history: assume a full-speed inbound run.
            let psi = (-rep.mu[1]).atan2(-rep.mu[0]);
            let s = AgentState::new(rep.mu, psi, cls.v_hi);
            let v = s.velocity(0.0);
            (s, v)
        }
    }
}

fn pursuit_input(cfg: &SimConfig, d: &AgentState, aim: &Vec3) -> ControlInput {
    let bearing = (aim[1] - d.p[1]).atan2(aim[0] - d.p[0]);
    let raw = ControlInput {
        omega: cfg.sim.k_pursuit * heading_error(bearing, d.psi) / cfg.env.dt,
        w: cfg.sim.k_pursuit_z * (aim[2] - d.p[2]),
    };
    saturate(&raw, &cfg.defender)
}

fn station_of(cfg: &SimConfig, nd: usize, j: usize) -> Vec3 {
    let ang = 2.0 * PI * j as f64 / nd.max(1) as f64;
    [cfg.env.r_hard * ang.cos(), cfg.env.r_hard * ang.sin(), cfg.env.h / 2.0]
}

/// Initial attacker and defender states plus per-attacker behavior modes.
pub fn initial_states(cfg: &SimConfig, seed: u64) -> (Vec<AgentState>, Vec<BehaviorMode>, Vec<AgentState>) {
    let mut rng = stream(seed, Subsystem::Init, 0, 0);
    let env = &cfg.env;
    let mut attackers = Vec::with_capacity(cfg.n_attackers);
    let mut modes = Vec::with_capacity(cfg.n_attackers);
    for i in 0..cfg.n_attackers {
        let ang: f64 = rng.random_range(-PI..PI);
        let r = rng.random_range(cfg.sim.init_r_lo * env.r_soft..=cfg.sim.init_r_hi * env.r_soft);
        let z = rng.random_range(0.0..=env.h);
        let v = if cfg.attacker.v_hi > cfg.attacker.v_lo { rng.random_range(cfg.attacker.v_lo..=cfg.attacker.v_hi) } else { cfg.attacker.v_lo };
        let spread = cfg.sim.heading_spread;
        let dpsi = if spread > 0.0 { rng.random_range(-spread..=spread) } else { 0.0 };
        let phi = rng.random_range(0.0..2.0 * PI);
        attackers.push(AgentState::new([r * ang.cos(), r * ang.sin(), z], ang + PI + dpsi, v));
        modes.push(behavior_for(cfg, i, phi));
    }
    let defenders = (0..cfg.n_defenders)
        .map(|j| {
            let p = station_of(cfg, cfg.n_defenders, j);
            AgentState::new(p, p[1].atan2(p[0]), cfg.defender.v_hi)
        })
        .collect();
    (attackers, modes, defenders)
}

pub fn run_episode(cfg: &SimConfig, seed: u64) -> Result<RunLog> {
    cfg.validate()?;
    let (attackers, modes, defenders) = initial_states(cfg, seed);
    run_from(cfg, seed, attackers, &modes, defenders)
}

/// Run the loop from explicit initial states. Defender stations are still the
/// evenly spaced hard-boundary points.
pub fn run_from(
    cfg: &SimConfig,
    seed: u64,
    mut attackers: Vec<AgentState>,
    modes: &[BehaviorMode],
    mut defenders: Vec<AgentState>,
) -> Result<RunLog> {
    cfg.validate()?;
    if modes.len() != attackers.len() {
        return Err(Error::Validation("one behavior mode per attacker".into()));
    }
    let started = Instant::now();
    let env = &cfg.env;
    let nd = defenders.len();
    let mut tracks: Vec<Option<Track>> = vec![None; attackers.len()];
    let mut prev_targets: Vec<Option<usize>> = vec![None; nd];
    let mut cooldowns = vec![0u32; nd];
    let mut windows = Vec::new();
    let (mut tau1, mut kappa1, mut t0) = (None, None, None);
    let (mut neutralized, mut breaches_total) = (0usize, 0usize);
    let mut capture_dists = Vec::new();
    let max_ttb = cfg.sim.ttb_horizon_factor * env.horizon as f64 * env.dt;
    let substeps = cfg.sim.substeps.max(1);
    let h = env.dt / substeps as f64;

    if attackers.is_empty() {
        windows.push(WindowRecord::default());
        t0 = Some(0);
    }

    for k in 0..env.horizon {
        if t0.is_some() {
            break;
        }
        let live = attackers.iter().filter(|a| a.alive).count();
        let t_k = k as f64 * env.dt;

        // sense
        let reports = sense(&attackers, &cfg.sensing, &mut stream(seed, Subsystem::Sensing, k as u64, 0));
        let detected: Vec<DetectionReport> = reports.iter().filter(|r| r.detected).cloned().collect();
        if !detected.is_empty() && tau1.is_none() {
            tau1 = Some(k);
        }

        // estimates and tracks
        let mut ests = Vec::with_capacity(detected.len());
        let mut vels = Vec::with_capacity(detected.len());
        for rep in &detected {
            let prev = tracks[rep.id].as_ref().map(|t| (&t.report.mu, t.last_seen));
            let (state, vel) = estimate_state(cfg, rep, prev, k);
            ests.push(Estimate { report: rep.clone(), state: state.clone() });
            vels.push(vel);
            tracks[rep.id] = Some(Track { report: rep.clone(), last_seen: k, state });
        }
        let ctx = RiskContext {
            env,
            class: &cfg.attacker,
            behavior: &cfg.behavior,
            graph: &cfg.graph,
            risk: &cfg.risk,
            c0_sq: cfg.sensing.c0_sq,
            max_ttb,
            seed,
            window: k as u64,
        };
        let mut tracked_unseen = Vec::new();
        for (id, tr) in tracks.iter_mut().enumerate() {
            let Some(tr) = tr else { continue };
            if tr.last_seen == k || !attackers[id].alive {
                continue;
            }
            tr.state = propagate_nominal(&tr.state, 1, &ctx);
            tr.report.mu = tr.state.p;
            for row in tr.report.sigma.iter_mut() {
                for x in row.iter_mut() {
                    *x *= 1.1;
                }
            }
            let next = propagate_nominal(&tr.state, 1, &ctx).p;
            let mut rng = stream(seed, Subsystem::Markov, id as u64, k as u64);
            let tm = estimate_transition(&tr.report, &next, &cfg.risk, cfg.sensing.c0_sq, env, &mut rng)?;
            let p = breach_probability(&missed_detection_adjust(&tm, cfg.risk.eps_fail), cfg.risk.h_steps);
            tracked_unseen.push((id, markov_risk(p, cfg.risk.gamma_phi)));
        }

        // criticality over the detected set
        let bundle = criticality_bundle(&ests, &ctx)?;

        // pair geometry, admissibility, cost
        let remaining = (env.horizon - k) as f64 * env.dt;
        let delta_adm = if cfg.assign.n_adm > 0 { cfg.assign.n_adm as f64 * env.dt } else { remaining };
        let v_d = cfg.defender.v_hi;
        let geo: Vec<Vec<PairGeometry>> = defenders
            .iter()
            .map(|d| ests.iter().zip(&vels).map(|(e, v)| pair_geometry(&d.p, &e.report.mu, v, v_d, env.r_cap, delta_adm)).collect())
            .collect();
        let adm = admissible_domain(&geo, delta_adm, env.r_cap, cfg.assign.r_t);
        let t_ji: Vec<Vec<f64>> = geo.iter().map(|r| r.iter().map(|g| g.t_ji).collect()).collect();
        let cost = build_cost(&adm, &t_ji, &bundle.ttb, &bundle.c_assign, &cfg.assign);
        let matching = match cfg.assign.mode {
            AssignMode::Hungarian => solve_lsap(&cost),
            AssignMode::Greedy => solve_greedy(&cost),
        };
        let matching = strip_sentinels(&cost, &matching, cfg.assign.big_m);
        let mut planned: Vec<Option<usize>> = vec![None; nd];
        for &(j, c) in &matching {
            planned[j] = Some(ests[c].report.id);
        }
        let col_of = |id: usize| ests.iter().position(|e| e.report.id == id);
        let outcome = regulate_switching(
            &prev_targets,
            &planned,
            |id| col_of(id).map_or(0.0, |c| bundle.c_assign[c]),
            |j, id| col_of(id).is_some_and(|c| cost[j][c] < 0.5 * cfg.assign.big_m),
            &mut cooldowns,
            &cfg.assign,
        );
        let targets = outcome.targets;
        let m_k = targets.iter().filter(|t| t.is_some()).count();
        let c_k = nd.min(detected.len());
        let eta_k = if c_k > 0 { m_k as f64 / c_k as f64 } else { 0.0 };

        // defender nominal inputs and filter
        let mut d_nom = Vec::with_capacity(nd);
        for (j, d) in defenders.iter().enumerate() {
            let u = match targets[j].and_then(col_of) {
                Some(c) => {
                    let (mu, v, t) = (&ests[c].report.mu, &vels[c], t_ji[j][c]);
                    let lead = if t.is_finite() { t.min(cfg.sim.max_lead) } else { 0.0 };
                    pursuit_input(cfg, d, &[mu[0] + v[0] * lead, mu[1] + v[1] * lead, mu[2] + v[2] * lead])
                }
                None => pursuit_input(cfg, d, &station_of(cfg, nd, j)),
            };
            d_nom.push(u);
        }
        let (d_in, d_flag) = if cfg.safety.enabled {
            let o = defender_filter(&defenders, &d_nom, &cfg.defender, &cfg.safety, env, substeps);
            (o.inputs, !o.feasible)
        } else {
            (d_nom, false)
        };

        // attacker inputs and filter
        let mut a_nom = vec![ControlInput::default(); attackers.len()];
        for (i, a) in attackers.iter().enumerate() {
            if a.alive {
                let mut rng = stream(seed, Subsystem::Behavior, i as u64, k as u64);
                a_nom[i] = behavior_input(&modes[i], a, t_k, env, &cfg.attacker, &cfg.behavior, &mut rng);
            }
        }
        let (a_in, a_flag) = if cfg.safety.enabled {
            let o = attacker_filter(&attackers, &a_nom, &cfg.attacker, &cfg.safety, env, substeps);
            (o.inputs, !o.feasible)
        } else {
            (a_nom, false)
        };

        // execute the window
        let mut captures = Vec::new();
        let mut breaches = Vec::new();
        let mut pair_min: Vec<(usize, usize, f64)> =
            targets.iter().enumerate().filter_map(|(j, t)| t.map(|i| (j, i, dist(&defenders[j].p, &attackers[i].p)))).collect();
        for _ in 0..substeps {
            for (d, u) in defenders.iter_mut().zip(&d_in) {
                *d = step(d, u, h, env);
            }
            for (a, u) in attackers.iter_mut().zip(&a_in) {
                if a.alive {
                    *a = step(a, u, h, env);
                }
            }
            for pm in pair_min.iter_mut() {
                if attackers[pm.1].alive {
                    pm.2 = pm.2.min(dist(&defenders[pm.0].p, &attackers[pm.1].p));
                }
            }
            for (i, a) in attackers.iter_mut().enumerate() {
                if !a.alive {
                    continue;
                }
                let hit = defenders
                    .iter()
                    .enumerate()
                    .map(|(j, d)| (dist(&d.p, &a.p), j))
                    .filter(|(r, _)| *r <= env.r_cap)
                    .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                if let Some((_, j)) = hit {
                    a.alive = false;
                    captures.push(Capture { defender: j, attacker: i, dist_to_hard: dist_to_hard(&a.p, env) });
                } else if in_hard(&a.p, env) {
                    a.alive = false;
                    breaches.push(i);
                }
            }
        }
        let pairs: Vec<PairStat> = pair_min
            .iter()
            .map(|&(j, i, md)| PairStat {
                defender: j,
                attacker: i,
                success: captures.iter().any(|c| c.defender == j && c.attacker == i),
                min_dist: md,
            })
            .collect();
        let if_k = !captures.is_empty();
        if if_k && kappa1.is_none() {
            kappa1 = Some(k);
        }
        neutralized += captures.len();
        breaches_total += breaches.len();
        capture_dists.extend(captures.iter().map(|c| c.dist_to_hard));
        windows.push(WindowRecord {
            k,
            t_k,
            live,
            n_detected: detected.len(),
            m_k,
            c_k,
            eta_k,
            switches: outcome.switches,
            captures,
            breaches,
            if_k,
            qp_infeasible_attacker: a_flag,
            qp_infeasible_defender: d_flag,
            pairs,
            edges: bundle.edges,
            tracked_unseen,
        });
        prev_targets = targets;
        if attackers.iter().all(|a| !a.alive) {
            t0 = Some(k + 1);
        }
    }

    let mean_intercept_distance =
        if capture_dists.is_empty() { None } else { Some(capture_dists.iter().sum::<f64>() / capture_dists.len() as f64) };
    Ok(RunLog {
        seed,
        config_digest: cfg.digest(),
        n_attackers: attackers.len(),
        n_defenders: nd,
        windows,
        tau1,
        kappa1,
        t0,
        neutralized,
        breach_count: breaches_total,
        mean_intercept_distance,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}
