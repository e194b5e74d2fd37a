//! Minimum-deviation QP safety filters. Barrier rows are written in discrete
//! time over one decision window, h(t+Δ) >= (1 - κΔ)·h(t), linearized in the
//! input increments through the window integrator and re-linearized until the
//! exact condition is certified.

use crate::error::{Error, Result};
use crate::geometry::{dist, sub, EnvConfig, Vec3};
use crate::graph::fiedler;
use crate::kinematics::{saturate, step, AgentClass, AgentState, ControlInput};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub kappa_col: f64,
    pub kappa_con: f64,
    pub kappa_d: f64,
    pub sigma_c: f64,
    pub lambda_min: f64,
    pub enabled: bool,
}

impl Default for BarrierParams {
    fn default() -> Self {
        BarrierParams { kappa_col: 8.0, kappa_con: 0.5, kappa_d: 8.0, sigma_c: 25.0, lambda_min: 1e-4, enabled: true }
    }
}

impl BarrierParams {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.kappa_col, self.kappa_con, self.kappa_d, self.sigma_c].iter().all(|&x| x > 0.0) && self.lambda_min >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation("barrier rates and sigma_c must be positive".into()))
        }
    }
}

/// min ‖x‖² s.t. aᵀx >= b for each row, lo <= x <= hi.
#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub n: usize,
    pub rows: Vec<(Vec<f64>, f64)>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl QpProblem {
    pub fn new(n: usize) -> Self {
        QpProblem { n, rows: Vec::new(), lo: vec![f64::NEG_INFINITY; n], hi: vec![f64::INFINITY; n] }
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut v = 0.0f64;
        for (a, b) in &self.rows {
            v = v.max(b - a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>());
        }
        for i in 0..self.n {
            v = v.max(self.lo[i] - x[i]).max(x[i] - self.hi[i]);
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub feasible: bool,
}

/// Lawson–Hanson non-negative least squares: min ‖E u − f‖, u >= 0.
pub fn nnls(e: &DMatrix<f64>, f: &DVector<f64>) -> DVector<f64> {
    let m = e.ncols();
    let tol = 1e-12 * (1.0 + e.abs().max());
    let mut u = DVector::zeros(m);
    let mut passive = vec![false; m];
    for _outer in 0..3 * m + 10 {
        let w = e.transpose() * (f - e * &u);
        let cand = (0..m).filter(|&j| !passive[j] && w[j] > tol).max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(t) = cand else { break };
        passive[t] = true;
        loop {
            let idx: Vec<usize> = (0..m).filter(|&j| passive[j]).collect();
            let ep = DMatrix::from_fn(e.nrows(), idx.len(), |r, c| e[(r, idx[c])]);
            let zp = ep.clone().svd(true, true).solve(f, 1e-13).unwrap_or_else(|_| DVector::zeros(idx.len()));
            if zp.iter().all(|&z| z > tol) {
                u.fill(0.0);
                for (c, &j) in idx.iter().enumerate() {
                    u[j] = zp[c];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (c, &j) in idx.iter().enumerate() {
                if zp[c] <= tol {
                    let d = u[j] - zp[c];
                    if d > 0.0 {
                        alpha = alpha.min(u[j] / d);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (c, &j) in idx.iter().enumerate() {
                u[j] += alpha * (zp[c] - u[j]);
            }
            let mut moved = false;
            for &j in &idx {
                if u[j] <= tol {
                    u[j] = 0.0;
                    passive[j] = false;
                    moved = true;
                }
            }
            if !moved || !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    u
}

fn least_violating(q: &QpProblem) -> Vec<f64> {
    let clamp = |x: &mut Vec<f64>| {
        for i in 0..q.n {
            x[i] = x[i].clamp(q.lo[i], q.hi[i]);
        }
    };
    let mut x = vec![0.0; q.n];
    clamp(&mut x);
    let lip: f64 = q.rows.iter().map(|(a, _)| a.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().max(1e-12);
    for _ in 0..500 {
        let mut g = vec![0.0; q.n];
        for (a, b) in &q.rows {
            let viol = b - a.iter().zip(&x).map(|(p, s)| p * s).sum::<f64>();
            if viol > 0.0 {
                for i in 0..q.n {
                    g[i] -= viol * a[i];
                }
            }
        }
        for i in 0..q.n {
            x[i] -= g[i] / lip;
        }
        clamp(&mut x);
    }
    x
}

/// Least-distance QP via NNLS on the dual. Infeasible problems return the
/// box-clamped least-violating point with `feasible = false`.
pub fn solve_qp(q: &QpProblem) -> QpSolution {
    let n = q.n;
    let mut g: Vec<(Vec<f64>, f64)> = q.rows.clone();
    for i in 0..n {
        let mut e = vec![0.0; n];
        if q.lo[i].is_finite() {
            e[i] = 1.0;
            g.push((e.clone(), q.lo[i]));
        }
        if q.hi[i].is_finite() {
            e[i] = -1.0;
            g.push((e, -q.hi[i]));
        }
    }
    if g.iter().all(|(_, b)| *b <= 0.0) {
        return QpSolution { x: vec![0.0; n], feasible: true };
    }
    let m = g.len();
    let e = DMatrix::from_fn(n + 1, m, |r, c| if r < n { g[c].0[r] } else { g[c].1 });
    let mut f = DVector::zeros(n + 1);
    f[n] = 1.0;
    let u = nnls(&e, &f);
    let r = &e * &u - &f;
    if r.norm() < 1e-10 || r[n].abs() < 1e-12 {
        return QpSolution { x: least_violating(q), feasible: false };
    }
    let mut x: Vec<f64> = (0..n).map(|i| -r[i] / r[n]).collect();
    for i in 0..n {
        x[i] = x[i].clamp(q.lo[i], q.hi[i]);
    }
    let scale = 1.0 + q.rows.iter().map(|(_, b)| b.abs()).fold(0.0, f64::max);
    if q.max_violation(&x) > 1e-6 * scale {
        return QpSolution { x: least_violating(q), feasible: false };
    }
    QpSolution { x, feasible: true }
}

/// Advance one decision window with the input held, using `substeps` Euler steps.
pub fn propagate(s: &AgentState, u: &ControlInput, dt: f64, substeps: usize, env: &EnvConfig) -> AgentState {
    let h = dt / substeps.max(1) as f64;
    let mut cur = s.clone();
    for _ in 0..substeps.max(1) {
        cur = step(&cur, u, h, env);
    }
    cur
}

/// Positions after each of the `substeps` Euler steps of one window.
fn substep_positions(s: &AgentState, u: &ControlInput, dt: f64, substeps: usize, env: &EnvConfig) -> Vec<Vec3> {
    let h = dt / substeps.max(1) as f64;
    let mut cur = s.clone();
    (0..substeps.max(1))
        .map(|_| {
            cur = step(&cur, u, h, env);
            cur.p
        })
        .collect()
}

/// Jacobian of the position after `m` substeps with respect to (omega, w).
fn position_jacobian(s: &AgentState, u: &ControlInput, dt: f64, substeps: usize, m: usize) -> [[f64; 2]; 3] {
    let h = dt / substeps.max(1) as f64;
    let (mut jx, mut jy) = (0.0, 0.0);
    for k in 0..m {
        let th = s.psi + k as f64 * u.omega * h;
        let lever = s.v * h * k as f64 * h;
        jx -= lever * th.sin();
        jy += lever * th.cos();
    }
    [[jx, 0.0], [jy, 0.0], [0.0, m as f64 * h]]
}

/// Window-level filter settings shared by both teams.
pub struct FilterSpec<'a> {
    pub class: &'a AgentClass,
    pub r_col: f64,
    pub kappa: f64,
    /// Connectivity floor and rate; `None` for defenders.
    pub connectivity: Option<(f64, f64, f64)>,
    pub env: &'a EnvConfig,
    pub substeps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutcome {
    pub inputs: Vec<ControlInput>,
    pub feasible: bool,
    pub modified: bool,
}

fn barrier_h(a: &Vec3, b: &Vec3, r: f64) -> f64 {
    let d = sub(a, b);
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2] - r * r
}

fn smooth_laplacian(ps: &[Vec3], sigma_c: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = ps.len();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d = dist(&ps[i], &ps[j]);
            let v = (-(d * d) / (sigma_c * sigma_c)).exp();
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    (crate::graph::laplacian(&w), w)
}

const CERT_TOL: f64 = 1e-7;

struct Scene<'a> {
    states: &'a [AgentState],
    active: Vec<usize>,
    spec: &'a FilterSpec<'a>,
}

impl Scene<'_> {
    /// Per active agent, positions after each substep.
    fn trajectories(&self, inputs: &[ControlInput]) -> Vec<Vec<Vec3>> {
        self.active
            .iter()
            .map(|&i| substep_positions(&self.states[i], &inputs[i], self.spec.env.dt, self.spec.substeps, self.spec.env))
            .collect()
    }

    /// Per-substep contraction factor of the collision barrier.
    fn rho(&self) -> f64 {
        1.0 - self.spec.kappa * self.spec.env.dt / self.spec.substeps.max(1) as f64
    }

    /// Most negative slack of the exact discrete conditions.
    fn worst_slack(&self, inputs: &[ControlInput]) -> f64 {
        let traj = self.trajectories(inputs);
        let next: Vec<Vec3> = traj.iter().map(|t| *t.last().expect("at least one substep")).collect();
        let dt = self.spec.env.dt;
        let rho = self.rho();
        let mut worst = f64::INFINITY;
        for a in 0..self.active.len() {
            for b in a + 1..self.active.len() {
                let (i, l) = (self.active[a], self.active[b]);
                let h0 = barrier_h(&self.states[i].p, &self.states[l].p, self.spec.r_col);
                for m in 0..traj[a].len() {
                    let hm = barrier_h(&traj[a][m], &traj[b][m], self.spec.r_col);
                    worst = worst.min(hm - rho.powi(m as i32 + 1) * h0);
                }
            }
        }
        if let Some((lam_min, kappa, sigma_c)) = self.spec.connectivity {
            if self.active.len() >= 2 {
                let now: Vec<Vec3> = self.active.iter().map(|&i| self.states[i].p).collect();
                let l0 = fiedler(&smooth_laplacian(&now, sigma_c).0).0;
                let l1 = fiedler(&smooth_laplacian(&next, sigma_c).0).0;
                worst = worst.min(l1 - lam_min - (1.0 - kappa * dt) * (l0 - lam_min));
            }
        }
        worst
    }
}

fn build_filter_qp(scene: &Scene, nominal: &[ControlInput], lin: &[ControlInput]) -> QpProblem {
    let spec = scene.spec;
    let env = spec.env;
    let dt = env.dt;
    let n_all = scene.states.len();
    let mut q = QpProblem::new(2 * n_all);
    for i in 0..n_all {
        if scene.active.contains(&i) {
            q.lo[2 * i] = -spec.class.omega_bar - nominal[i].omega;
            q.hi[2 * i] = spec.class.omega_bar - nominal[i].omega;
            q.lo[2 * i + 1] = -spec.class.w_bar - nominal[i].w;
            q.hi[2 * i + 1] = spec.class.w_bar - nominal[i].w;
        } else {
            q.lo[2 * i] = 0.0;
            q.hi[2 * i] = 0.0;
            q.lo[2 * i + 1] = 0.0;
            q.hi[2 * i + 1] = 0.0;
        }
    }
    let du_lin: Vec<f64> = (0..n_all).flat_map(|i| [lin[i].omega - nominal[i].omega, lin[i].w - nominal[i].w]).collect();
    let traj = scene.trajectories(lin);
    let next: Vec<Vec3> = traj.iter().map(|t| *t.last().expect("at least one substep")).collect();
    let n_sub = spec.substeps.max(1);
    let rho = scene.rho();
    let jac_at = |a: usize, m: usize| position_jacobian(&scene.states[scene.active[a]], &lin[scene.active[a]], dt, n_sub, m);
    let reach = |i: usize| (scene.states[i].v + spec.class.w_bar) * dt;
    let push_row = |q: &mut QpProblem, grad: Vec<f64>, rhs: f64| {
        let b = rhs + grad.iter().zip(&du_lin).map(|(g, d)| g * d).sum::<f64>();
        q.rows.push((grad, b));
    };
    for a in 0..scene.active.len() {
        for b in a + 1..scene.active.len() {
            let (i, l) = (scene.active[a], scene.active[b]);
            let d0 = dist(&scene.states[i].p, &scene.states[l].p);
            let h0 = d0 * d0 - spec.r_col * spec.r_col;
            // the loosest requirement is at the first substep
            let need = (rho.max(rho.powi(n_sub as i32)) * h0 + spec.r_col * spec.r_col).max(0.0).sqrt();
            if d0 - reach(i) - reach(l) >= need {
                continue;
            }
            for m in 1..=n_sub {
                let hm = barrier_h(&traj[a][m - 1], &traj[b][m - 1], spec.r_col);
                let dn = sub(&traj[a][m - 1], &traj[b][m - 1]);
                let (ja, jb) = (jac_at(a, m), jac_at(b, m));
                let mut grad = vec![0.0; 2 * n_all];
                for c in 0..2 {
                    grad[2 * i + c] += (0..3).map(|r| 2.0 * dn[r] * ja[r][c]).sum::<f64>();
                    grad[2 * l + c] += (0..3).map(|r| -2.0 * dn[r] * jb[r][c]).sum::<f64>();
                }
                push_row(&mut q, grad, rho.powi(m as i32) * h0 - hm);
            }
        }
    }
    if let Some((lam_min, kappa, sigma_c)) = spec.connectivity {
        if scene.active.len() >= 2 {
            let now: Vec<Vec3> = scene.active.iter().map(|&i| scene.states[i].p).collect();
            let l0 = fiedler(&smooth_laplacian(&now, sigma_c).0).0;
            let (lap, w) = smooth_laplacian(&next, sigma_c);
            let (l1, v, l3) = fiedler(&lap);
            let tie = (l3 - l1).abs() <= 1e-9 * (1.0 + l1.abs());
            if !tie {
                let mut grad = vec![0.0; 2 * n_all];
                let m = scene.active.len();
                for a in 0..m {
                    let mut dp = [0.0; 3];
                    for b in 0..m {
                        if a == b {
                            continue;
                        }
                        let coef = (v[a] - v[b]).powi(2) * w[(a, b)] * (-2.0 / (sigma_c * sigma_c));
                        for r in 0..3 {
                            dp[r] += coef * (next[a][r] - next[b][r]);
                        }
                    }
                    let i = scene.active[a];
                    let ja = jac_at(a, n_sub);
                    for c in 0..2 {
                        grad[2 * i + c] += (0..3).map(|r| dp[r] * ja[r][c]).sum::<f64>();
                    }
                }
                push_row(&mut q, grad, lam_min + (1.0 - kappa * dt) * (l0 - lam_min) - l1);
            }
        }
    }
    q
}

/// Joint filter over all live agents in `states`.
pub fn filter_inputs(states: &[AgentState], nominal: &[ControlInput], spec: &FilterSpec) -> FilterOutcome {
    let nominal: Vec<ControlInput> = nominal.iter().map(|u| saturate(u, spec.class)).collect();
    let scene = Scene { states, active: (0..states.len()).filter(|&i| states[i].alive).collect(), spec };
    let unchanged = FilterOutcome { inputs: nominal.clone(), feasible: true, modified: false };
    if scene.active.len() < 2 || scene.worst_slack(&nominal) >= -CERT_TOL {
        return unchanged;
    }
    // At equal altitudes the linearization has no vertical sensitivity, so a
    // second pass starts from an altitude split ordered by (z, index).
    let mut order = scene.active.clone();
    order.sort_by(|&a, &b| states[a].p[2].total_cmp(&states[b].p[2]).then(a.cmp(&b)));
    let mut split = nominal.clone();
    for (rank, &i) in order.iter().enumerate() {
        let dir = if 2 * rank + 1 < order.len() { -1.0 } else if 2 * rank + 1 > order.len() { 1.0 } else { 0.0 };
        split[i] = saturate(&ControlInput { omega: nominal[i].omega, w: nominal[i].w + dir * spec.class.w_bar }, spec.class);
    }
    for start in [nominal.clone(), split] {
        let mut lin = start;
        for _ in 0..6 {
            let q = build_filter_qp(&scene, &nominal, &lin);
            let sol = solve_qp(&q);
            if !sol.feasible {
                break;
            }
            let cand: Vec<ControlInput> = (0..states.len())
                .map(|i| ControlInput { omega: nominal[i].omega + sol.x[2 * i], w: nominal[i].w + sol.x[2 * i + 1] })
                .map(|u| saturate(&u, spec.class))
                .collect();
            if scene.worst_slack(&cand) >= -CERT_TOL {
                return FilterOutcome { inputs: cand, feasible: true, modified: true };
            }
            lin = cand;
        }
    }
    FilterOutcome { inputs: nominal, feasible: false, modified: false }
}

pub fn attacker_filter(
    states: &[AgentState],
    nominal: &[ControlInput],
    class: &AgentClass,
    bp: &BarrierParams,
    env: &EnvConfig,
    substeps: usize,
) -> FilterOutcome {
    let spec = FilterSpec {
        class,
        r_col: env.r_col,
        kappa: bp.kappa_col,
        connectivity: Some((bp.lambda_min, bp.kappa_con, bp.sigma_c)),
        env,
        substeps,
    };
    filter_inputs(states, nominal, &spec)
}

pub fn defender_filter(
    states: &[AgentState],
    nominal: &[ControlInput],
    class: &AgentClass,
    bp: &BarrierParams,
    env: &EnvConfig,
    substeps: usize,
) -> FilterOutcome {
    let spec = FilterSpec { class, r_col: env.r_col_d, kappa: bp.kappa_d, connectivity: None, env, substeps };
    filter_inputs(states, nominal, &spec)
}

/// Worst substep of the discrete barrier condition h_m >= (1 - κδ)^m h_0 for
/// one pair over a window, in rate units (ḣ + κh at m = 1). Nonnegative
/// means the pair is safe throughout the window.
pub fn discrete_barrier_rate(
    a: &AgentState,
    ua: &ControlInput,
    b: &AgentState,
    ub: &ControlInput,
    r_col: f64,
    kappa: f64,
    env: &EnvConfig,
    substeps: usize,
) -> f64 {
    let n = substeps.max(1);
    let delta = env.dt / n as f64;
    let rho = 1.0 - kappa * delta;
    let h0 = barrier_h(&a.p, &b.p, r_col);
    let (ta, tb) = (substep_positions(a, ua, env.dt, n, env), substep_positions(b, ub, env.dt, n, env));
    (1..=n)
        .map(|m| (barrier_h(&ta[m - 1], &tb[m - 1], r_col) - rho.powi(m as i32) * h0) / (m as f64 * delta))
        .fold(f64::INFINITY, f64::min)
}
