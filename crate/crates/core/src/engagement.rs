//! Pursuit-time surrogates, the admissible pair domain, assignment costs,
//! LSAP / greedy matching and switching hysteresis.

use crate::error::{Error, Result};
use crate::geometry::{dist, dot, norm, sub, Vec3};
use serde::{Deserialize, Serialize};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignMode {
    Hungarian,
    Greedy,
}

impl FromStr for AssignMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hungarian" | "lsap" => Ok(AssignMode::Hungarian),
            "greedy" => Ok(AssignMode::Greedy),
            o => Err(Error::Config(format!("unknown assign mode `{o}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngagementParams {
    pub big_m: f64,
    pub w_t: f64,
    pub w_c: f64,
    pub r_t: f64,
    pub switch_threshold: f64,
    pub cooldown: u32,
    pub mode: AssignMode,
    pub switching_enabled: bool,
    /// Admissibility window in decision windows; 0 means the remaining horizon.
    pub n_adm: usize,
}

impl Default for EngagementParams {
    fn default() -> Self {
        EngagementParams {
            big_m: 1e6,
            w_t: 1.0,
            w_c: 10.0,
            r_t: 0.3,
            switch_threshold: 0.15,
            cooldown: 3,
            mode: AssignMode::Hungarian,
            switching_enabled: true,
            n_adm: 0,
        }
    }
}

impl EngagementParams {
    pub fn validate(&self, r_cap: f64) -> Result<()> {
        if !(self.r_t > 0.0 && self.r_t < r_cap) || self.w_t < 0.0 || self.w_c < 0.0 || !(self.big_m > 0.0) {
            return Err(Error::Validation("engagement: need 0 < r_t < r_cap, weights >= 0, big_m > 0".into()));
        }
        Ok(())
    }
}

/// Smallest t >= 0 with ‖Δp + v_A t‖ = v_D t + r_cap (constant-velocity
/// target, straight-line pursuer), or infinity when the pursuer cannot close.
pub fn intercept_time(p_d: &Vec3, mu: &Vec3, v_a: &Vec3, v_d: f64, r_cap: f64) -> f64 {
    let dp = sub(mu, p_d);
    let gap = norm(&dp);
    if gap <= r_cap {
        return 0.0;
    }
    if v_d <= 0.0 {
        // only a target drifting into the capture ball can be met
        return root(dot(v_a, v_a), 2.0 * dot(&dp, v_a), gap * gap - r_cap * r_cap);
    }
    let a = dot(v_a, v_a) - v_d * v_d;
    let b = 2.0 * (dot(&dp, v_a) - v_d * r_cap);
    let c = gap * gap - r_cap * r_cap;
    root(a, b, c)
}

/// Smallest nonnegative root of a t² + b t + c = 0 (c > 0).
fn root(a: f64, b: f64, c: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(c.abs()).max(1e-300);
    if a.abs() <= 1e-14 * scale {
        return if b < 0.0 { -c / b } else { f64::INFINITY };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let sq = disc.sqrt();
    // numerically stable pair
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = [q / a, if q != 0.0 { c / q } else { f64::INFINITY }];
    roots.sort_by(|x, y| x.total_cmp(y));
    roots.into_iter().find(|&t| t >= 0.0).unwrap_or(f64::INFINITY)
}

/// Minimum distance over [0, window] of the nominal relative trajectory: the
/// pursuer flies straight at v_D toward the zero-radius intercept point, or at
/// the current estimate when no such point exists.
pub fn nominal_min_distance(p_d: &Vec3, mu: &Vec3, v_a: &Vec3, v_d: f64, window: f64) -> f64 {
    let t0 = intercept_time(p_d, mu, v_a, v_d, 0.0);
    let aim = if t0.is_finite() { [mu[0] + v_a[0] * t0, mu[1] + v_a[1] * t0, mu[2] + v_a[2] * t0] } else { *mu };
    let to_aim = sub(&aim, p_d);
    let n = norm(&to_aim);
    let u = if n > 0.0 { [to_aim[0] / n, to_aim[1] / n, to_aim[2] / n] } else { [0.0; 3] };
    // relative position attacker - defender: r(t) = r0 + (v_a - v_d u) t
    let r0 = sub(mu, p_d);
    let vr = [v_a[0] - v_d * u[0], v_a[1] - v_d * u[1], v_a[2] - v_d * u[2]];
    let vv = dot(&vr, &vr);
    let t_star = if vv > 0.0 { (-dot(&r0, &vr) / vv).clamp(0.0, window.max(0.0)) } else { 0.0 };
    norm(&[r0[0] + vr[0] * t_star, r0[1] + vr[1] * t_star, r0[2] + vr[2] * t_star])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairGeometry {
    pub t_ji: f64,
    pub min_dist: f64,
}

pub fn pair_geometry(p_d: &Vec3, mu: &Vec3, v_a: &Vec3, v_d: f64, r_cap: f64, window: f64) -> PairGeometry {
    PairGeometry { t_ji: intercept_time(p_d, mu, v_a, v_d, r_cap), min_dist: nominal_min_distance(p_d, mu, v_a, v_d, window) }
}

pub fn is_admissible(g: &PairGeometry, delta_adm: f64, r_cap: f64, r_t: f64) -> bool {
    g.t_ji.is_finite() && g.t_ji <= delta_adm && g.min_dist <= r_cap - r_t
}

/// Admissibility mask (defenders × attackers).
pub fn admissible_domain(pairs: &[Vec<PairGeometry>], delta_adm: f64, r_cap: f64, r_t: f64) -> Vec<Vec<bool>> {
    pairs.iter().map(|row| row.iter().map(|g| is_admissible(g, delta_adm, r_cap, r_t)).collect()).collect()
}

/// Cost matrix (defenders × attackers).
pub fn build_cost(
    admissible: &[Vec<bool>],
    t_ji: &[Vec<f64>],
    t_i: &[f64],
    c_assign: &[f64],
    ep: &EngagementParams,
) -> Vec<Vec<f64>> {
    admissible
        .iter()
        .enumerate()
        .map(|(j, row)| {
            row.iter()
                .enumerate()
                .map(|(i, &ok)| {
                    if !ok {
                        return ep.big_m;
                    }
                    let ci = if t_ji[j][i] < t_i[i] { t_ji[j][i] } else { ep.big_m };
                    ep.w_t * ci - ep.w_c * c_assign[i]
                })
                .collect()
        })
        .collect()
}

/// Optimal rectangular assignment (shortest augmenting paths with potentials).
/// Returns (row, col) pairs sorted by row; size min(rows, cols).
pub fn solve_lsap(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let nr = cost.len();
    let nc = if nr == 0 { 0 } else { cost[0].len() };
    if nr == 0 || nc == 0 {
        return Vec::new();
    }
    if nr > nc {
        let t: Vec<Vec<f64>> = (0..nc).map(|j| (0..nr).map(|i| cost[i][j]).collect()).collect();
        let mut m: Vec<(usize, usize)> = solve_lsap(&t).into_iter().map(|(a, b)| (b, a)).collect();
        m.sort();
        return m;
    }
    let mut u = vec![0.0; nr];
    let mut v = vec![0.0; nc];
    let mut path = vec![usize::MAX; nc];
    let mut col4row = vec![usize::MAX; nr];
    let mut row4col = vec![usize::MAX; nc];
    for cur in 0..nr {
        let mut shortest = vec![f64::INFINITY; nc];
        let mut sr = vec![false; nr];
        let mut sc = vec![false; nc];
        let mut remaining: Vec<usize> = (0..nc).rev().collect();
        let mut min_val = 0.0;
        let mut i = cur;
        let sink;
        loop {
            sr[i] = true;
            let mut best = usize::MAX;
            let mut lowest = f64::INFINITY;
            for (k, &j) in remaining.iter().enumerate() {
                let r = min_val + cost[i][j] - u[i] - v[j];
                if r < shortest[j] {
                    path[j] = i;
                    shortest[j] = r;
                }
                if shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == usize::MAX) {
                    lowest = shortest[j];
                    best = k;
                }
            }
            min_val = lowest;
            let j = remaining[best];
            sc[j] = true;
            remaining.swap_remove(best);
            if row4col[j] == usize::MAX {
                sink = j;
                break;
            }
            i = row4col[j];
        }
        u[cur] += min_val;
        for r in 0..nr {
            if sr[r] && r != cur {
                u[r] += min_val - shortest[col4row[r]];
            }
        }
        for c in 0..nc {
            if sc[c] {
                v[c] -= min_val - shortest[c];
            }
        }
        let mut j = sink;
        loop {
            let r = path[j];
            row4col[j] = r;
            std::mem::swap(&mut col4row[r], &mut j);
            if r == cur {
                break;
            }
        }
    }
    (0..nr).map(|r| (r, col4row[r])).collect()
}

/// Global-minimum-first greedy matching; ties by (row, col).
pub fn solve_greedy(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let mut cells: Vec<(f64, usize, usize)> =
        cost.iter().enumerate().flat_map(|(r, row)| row.iter().enumerate().map(move |(c, &x)| (x, r, c))).collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let nr = cost.len();
    let nc = cost.first().map_or(0, |r| r.len());
    let (mut ur, mut uc) = (vec![false; nr], vec![false; nc]);
    let mut out = Vec::new();
    for (_, r, c) in cells {
        if !ur[r] && !uc[c] {
            ur[r] = true;
            uc[c] = true;
            out.push((r, c));
        }
    }
    out.sort();
    out
}

pub fn matching_cost(cost: &[Vec<f64>], m: &[(usize, usize)]) -> f64 {
    m.iter().map(|&(r, c)| cost[r][c]).sum()
}

/// Drop pairs priced at or above half the sentinel.
pub fn strip_sentinels(cost: &[Vec<f64>], m: &[(usize, usize)], big_m: f64) -> Vec<(usize, usize)> {
    m.iter().copied().filter(|&(r, c)| cost[r][c] < 0.5 * big_m).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchOutcome {
    pub targets: Vec<Option<usize>>,
    pub switches: usize,
}

/// Hysteresis on reassignment. `prev` and `planned` hold attacker ids per
/// defender; `available(j, i)` says whether defender j can still pursue i;
/// `score(i)` is the assignment score of attacker i. Cooldowns are updated in place.
pub fn regulate_switching(
    prev: &[Option<usize>],
    planned: &[Option<usize>],
    score: impl Fn(usize) -> f64,
    available: impl Fn(usize, usize) -> bool,
    cooldowns: &mut [u32],
    ep: &EngagementParams,
) -> SwitchOutcome {
    let nd = planned.len();
    let live_prev: Vec<Option<usize>> = (0..nd).map(|j| prev.get(j).copied().flatten().filter(|&i| available(j, i))).collect();
    if !ep.switching_enabled {
        let switches = (0..nd).filter(|&j| live_prev[j].is_some() && planned[j].is_some() && planned[j] != live_prev[j]).count();
        for c in cooldowns.iter_mut() {
            *c = 0;
        }
        return SwitchOutcome { targets: planned.to_vec(), switches };
    }
    let mut keep = vec![false; nd];
    let mut just_set = vec![false; nd];
    for j in 0..nd {
        let Some(p) = live_prev[j] else { continue };
        match planned[j] {
            Some(n) if n == p => keep[j] = true,
            Some(n) => {
                let gain = score(n) - score(p);
                keep[j] = !(gain > ep.switch_threshold && cooldowns[j] == 0);
            }
            None => keep[j] = true,
        }
    }
    let mut taken: Vec<usize> = (0..nd).filter(|&j| keep[j]).filter_map(|j| live_prev[j]).collect();
    let mut targets: Vec<Option<usize>> = (0..nd).map(|j| if keep[j] { live_prev[j] } else { None }).collect();
    let mut switches = 0;
    for j in 0..nd {
        if keep[j] {
            continue;
        }
        let choice = match planned[j] {
            Some(n) if !taken.contains(&n) => Some(n),
            _ => live_prev[j].filter(|p| !taken.contains(p)),
        };
        if let Some(t) = choice {
            taken.push(t);
            if live_prev[j].is_some_and(|p| p != t) {
                switches += 1;
                cooldowns[j] = ep.cooldown;
                just_set[j] = true;
            }
        }
        targets[j] = choice;
    }
    for j in 0..nd {
        if !just_set[j] && cooldowns[j] > 0 {
            cooldowns[j] -= 1;
        }
    }
    SwitchOutcome { targets, switches }
}

/// Capture tube bookkeeping on sampled relative trajectories (attacker minus
/// defender). Returns (nominally admissible, tube event, capture registered).
pub fn tube_check(nominal: &[Vec3], realized: &[Vec3], r_cap: f64, r_t: f64) -> (bool, bool, bool) {
    let min_nom = nominal.iter().map(norm).fold(f64::INFINITY, f64::min);
    let tube = nominal.iter().zip(realized).all(|(a, b)| dist(a, b) <= r_t);
    let captured = realized.iter().any(|x| norm(x) <= r_cap);
    (min_nom <= r_cap - r_t, tube, captured)
}
