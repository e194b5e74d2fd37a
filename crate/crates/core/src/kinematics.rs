//! Constant-speed Dubins-like agents, input boxes, attacker guidance and
//! time-to-breach rollouts.

use crate::error::{Error, Result};
use crate::geometry::{dist_to_hard, in_hard, planar_radius, EnvConfig, Vec3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::str::FromStr;

/// Sentinel for "never breaches within the rollout horizon".
pub const NEVER: f64 = f64::INFINITY;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub p: Vec3,
    pub psi: f64,
    pub v: f64,
    pub alive: bool,
}

impl AgentState {
    pub fn new(p: Vec3, psi: f64, v: f64) -> Self {
        AgentState { p, psi: wrap_angle(psi), v, alive: true }
    }

    pub fn velocity(&self, w: f64) -> Vec3 {
        [self.v * self.psi.cos(), self.v * self.psi.sin(), w]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub omega: f64,
    pub w: f64,
}

/// Speed interval and input box of one agent class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentClass {
    pub v_lo: f64,
    pub v_hi: f64,
    pub omega_bar: f64,
    pub w_bar: f64,
}

impl AgentClass {
    pub fn attacker_default() -> Self {
        AgentClass { v_lo: 0.5, v_hi: 1.0, omega_bar: 0.3, w_bar: 0.5 }
    }

    pub fn defender_default() -> Self {
        AgentClass { v_lo: 3.5, v_hi: 3.5, omega_bar: 1.0, w_bar: 1.5 }
    }
}

/// Wrap to [-pi, pi).
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Shortest signed angular difference target - current; an exact half turn maps to +pi.
pub fn heading_error(target: f64, current: f64) -> f64 {
    let e = wrap_angle(target - current);
    if e == -PI {
        PI
    } else {
        e
    }
}

pub fn step(s: &AgentState, u: &ControlInput, dt: f64, env: &EnvConfig) -> AgentState {
    let mut n = s.clone();
    n.p[0] += s.v * s.psi.cos() * dt;
    n.p[1] += s.v * s.psi.sin() * dt;
    n.p[2] = (s.p[2] + u.w * dt).clamp(0.0, env.z_max);
    n.psi = wrap_angle(s.psi + u.omega * dt);
    n
}

pub fn saturate(u: &ControlInput, class: &AgentClass) -> ControlInput {
    ControlInput {
        omega: u.omega.clamp(-class.omega_bar, class.omega_bar),
        w: u.w.clamp(-class.w_bar, class.w_bar),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorTag {
    Nominal,
    BiasedRandom,
    Sinusoidal,
    Flanking,
    Random,
}

impl FromStr for BehaviorTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "nominal" => BehaviorTag::Nominal,
            "biased_random" => BehaviorTag::BiasedRandom,
            "sinusoidal" => BehaviorTag::Sinusoidal,
            "flanking" => BehaviorTag::Flanking,
            "random" => BehaviorTag::Random,
            other => return Err(Error::Config(format!("unknown behavior mode `{other}`"))),
        })
    }
}

impl BehaviorTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorTag::Nominal => "nominal",
            BehaviorTag::BiasedRandom => "biased_random",
            BehaviorTag::Sinusoidal => "sinusoidal",
            BehaviorTag::Flanking => "flanking",
            BehaviorTag::Random => "random",
        }
    }
}

/// Gains and noise shared by the attacker policies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorParams {
    pub k_psi: f64,
    pub k_z: f64,
    pub amp: f64,
    pub nu: f64,
    pub sigma_omega: f64,
    pub sigma_w: f64,
}

impl Default for BehaviorParams {
    fn default() -> Self {
        BehaviorParams { k_psi: 1.0, k_z: 0.1, amp: 0.6, nu: 0.15, sigma_omega: 0.1, sigma_w: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorMode {
    pub tag: BehaviorTag,
    /// Per-agent phase in [0, 2pi); its half-plane also picks the flanking side.
    pub phi: f64,
}

/// Planar bearing toward the nearest point of the hard cylinder. Inside the
/// cylinder footprint the current heading is kept.
pub fn inward_bearing(s: &AgentState, env: &EnvConfig) -> f64 {
    if planar_radius(&s.p) <= env.r_hard {
        s.psi
    } else {
        (-s.p[1]).atan2(-s.p[0])
    }
}

fn steer(s: &AgentState, target: f64, env: &EnvConfig, class: &AgentClass, bp: &BehaviorParams) -> ControlInput {
    let raw = ControlInput {
        omega: bp.k_psi * heading_error(target, s.psi),
        w: bp.k_z * (env.h / 2.0 - s.p[2]),
    };
    saturate(&raw, class)
}

pub fn nominal_attacker_guidance(
    s: &AgentState,
    env: &EnvConfig,
    class: &AgentClass,
    bp: &BehaviorParams,
) -> ControlInput {
    steer(s, inward_bearing(s, env), env, class, bp)
}

/// Flanking blend weight: 0 far out, 1 on the hard boundary.
pub fn flank_lambda(s: &AgentState, env: &EnvConfig) -> f64 {
    (1.0 - dist_to_hard(&s.p, env) / env.r_soft).clamp(0.0, 1.0)
}

pub fn behavior_input<R: Rng>(
    mode: &BehaviorMode,
    s: &AgentState,
    t: f64,
    env: &EnvConfig,
    class: &AgentClass,
    bp: &BehaviorParams,
    rng: &mut R,
) -> ControlInput {
    let bearing = inward_bearing(s, env);
    let noisy = |rng: &mut R, target: f64| {
        let eta = gauss(rng, bp.sigma_omega);
        let xi = gauss(rng, bp.sigma_w);
        saturate(
            &ControlInput {
                omega: bp.k_psi * heading_error(target, s.psi) + eta,
                w: bp.k_z * (env.h / 2.0 - s.p[2]) + xi,
            },
            class,
        )
    };
    match mode.tag {
        BehaviorTag::Nominal => nominal_attacker_guidance(s, env, class, bp),
        BehaviorTag::BiasedRandom => noisy(rng, bearing),
        BehaviorTag::Sinusoidal => {
            let target = bearing + bp.amp * (bp.nu * t + mode.phi).sin();
            steer(s, target, env, class, bp)
        }
        BehaviorTag::Flanking => {
            let side = if mode.phi < PI { 1.0 } else { -1.0 };
            let lam = flank_lambda(s, env);
            let target = (1.0 - lam) * (bearing + side * PI / 2.0) + lam * bearing;
            steer(s, target, env, class, bp)
        }
        BehaviorTag::Random => ControlInput {
            omega: rng.random_range(-class.omega_bar..=class.omega_bar),
            w: rng.random_range(-class.w_bar..=class.w_bar),
        },
    }
}

fn gauss<R: Rng>(rng: &mut R, sd: f64) -> f64 {
    if sd > 0.0 {
        Normal::new(0.0, sd).map(|n| n.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

/// Closed-loop rollout of the nominal guidance until the state enters the hard
/// cylinder. Returns elapsed time or [`NEVER`].
pub fn time_to_breach(
    s: &AgentState,
    env: &EnvConfig,
    class: &AgentClass,
    bp: &BehaviorParams,
    max_horizon: f64,
) -> f64 {
    if in_hard(&s.p, env) {
        return 0.0;
    }
    let mut cur = s.clone();
    let mut t = 0.0;
    let steps = (max_horizon / env.dt).ceil() as usize;
    for _ in 0..steps {
        let u = nominal_attacker_guidance(&cur, env, class, bp);
        cur = step(&cur, &u, env.dt, env);
        t += env.dt;
        if in_hard(&cur.p, env) {
            return t;
        }
    }
    NEVER
}
