//! Scenario configuration: one struct for the whole loop, addressed by flat
//! dotted keys. Files are TOML; nested tables and dotted keys flatten to the
//! same key strings.

use crate::engagement::{AssignMode, EngagementParams};
use crate::error::{Error, Result};
use crate::geometry::EnvConfig;
use crate::graph::{GraphMode, GraphParams};
use crate::kinematics::{AgentClass, BehaviorParams, BehaviorTag};
use crate::risk::RiskParams;
use crate::safety::BarrierParams;
use crate::sensing::{SensingMode, SensingParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::path::Path;
use std::str::FromStr;

/// Loop knobs that belong to no single module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopParams {
    pub substeps: usize,
    /// Defender heading gain, per window.
    pub k_pursuit: f64,
    pub k_pursuit_z: f64,
    /// Cap on the lead time used when aiming at a predicted intercept point.
    pub max_lead: f64,
    /// Initial attacker radius range as multiples of r_soft.
    pub init_r_lo: f64,
    pub init_r_hi: f64,
    /// Half-width of the initial heading spread around inbound.
    pub heading_spread: f64,
    /// Time-to-breach rollouts stop after this many horizons.
    pub ttb_horizon_factor: f64,
}

impl Default for LoopParams {
    fn default() -> Self {
        LoopParams {
            substeps: 10,
            k_pursuit: 1.0,
            k_pursuit_z: 1.0,
            max_lead: 20.0,
            init_r_lo: 2.0,
            init_r_hi: 3.0,
            heading_spread: PI / 4.0,
            ttb_horizon_factor: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub env: EnvConfig,
    pub n_attackers: usize,
    pub n_defenders: usize,
    pub attacker: AgentClass,
    pub defender: AgentClass,
    /// `None` cycles attackers through the four non-nominal policies.
    pub behavior_mode: Option<BehaviorTag>,
    pub behavior: BehaviorParams,
    pub sensing: SensingParams,
    pub graph: GraphParams,
    pub risk: RiskParams,
    pub safety: BarrierParams,
    pub assign: EngagementParams,
    pub sim: LoopParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            env: EnvConfig::default(),
            n_attackers: 10,
            n_defenders: 6,
            attacker: AgentClass::attacker_default(),
            defender: AgentClass::defender_default(),
            behavior_mode: Some(BehaviorTag::Nominal),
            behavior: BehaviorParams::default(),
            sensing: SensingParams { snr0: 33.0, ..SensingParams::default() },
            graph: GraphParams::default(),
            risk: RiskParams::default(),
            safety: BarrierParams::default(),
            assign: EngagementParams::default(),
            sim: LoopParams::default(),
        }
    }
}

trait KeyValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn show(&self) -> String;
}

impl KeyValue for f64 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.trim().parse::<f64>().map_err(|e| e.to_string()).and_then(|x| if x.is_finite() { Ok(x) } else { Err("not finite".into()) })
    }
    fn show(&self) -> String {
        format!("{self:?}")
    }
}

macro_rules! int_value {
    ($($t:ty),*) => {$(
        impl KeyValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.trim().parse::<$t>().map_err(|e| e.to_string())
            }
            fn show(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
int_value!(usize, u32, bool);

impl KeyValue for SensingMode {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "deterministic" => Ok(SensingMode::Deterministic),
            "probabilistic" => Ok(SensingMode::Probabilistic),
            o => Err(format!("expected deterministic|probabilistic, got `{o}`")),
        }
    }
    fn show(&self) -> String {
        match self {
            SensingMode::Deterministic => "deterministic",
            SensingMode::Probabilistic => "probabilistic",
        }
        .into()
    }
}

impl KeyValue for GraphMode {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        GraphMode::from_str(s.trim()).map_err(|e| e.to_string())
    }
    fn show(&self) -> String {
        match self {
            GraphMode::Overlap => "overlap",
            GraphMode::Proximity => "proximity",
            GraphMode::None => "none",
        }
        .into()
    }
}

impl KeyValue for AssignMode {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        AssignMode::from_str(s.trim()).map_err(|e| e.to_string())
    }
    fn show(&self) -> String {
        match self {
            AssignMode::Hungarian => "hungarian",
            AssignMode::Greedy => "greedy",
        }
        .into()
    }
}

impl KeyValue for Option<BehaviorTag> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "mixed" => Ok(None),
            t => BehaviorTag::from_str(t).map(Some).map_err(|e| e.to_string()),
        }
    }
    fn show(&self) -> String {
        self.map_or("mixed", |t| t.as_str()).into()
    }
}

macro_rules! keys {
    ($($key:literal => ($($path:tt)+))*) => {
        /// Every recognised key, in canonical order.
        pub const KEYS: &[&str] = &[$($key),*];

        impl SimConfig {
            /// Set one key from its textual value.
            pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
                let key = canonical_key(key);
                match key {
                    $($key => {
                        self.$($path)+ = KeyValue::parse_value(raw)
                            .map_err(|msg| Error::BadValue { key: key.to_string(), msg })?;
                    })*
                    _ => return Err(Error::UnknownKey(key.to_string())),
                }
                Ok(())
            }

            pub fn get(&self, key: &str) -> Result<String> {
                match canonical_key(key) {
                    $($key => Ok(self.$($path)+.show()),)*
                    k => Err(Error::UnknownKey(k.to_string())),
                }
            }

            /// Canonical (key, value) listing of the full configuration.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, self.$($path)+.show())),*]
            }
        }
    };
}

fn canonical_key(key: &str) -> &str {
    match key {
        "safety.r_col" => "env.r_col",
        "safety.r_col_d" => "env.r_col_d",
        k => k,
    }
}

keys! {
    "env.r_hard" => (env.r_hard)
    "env.r_soft" => (env.r_soft)
    "env.h" => (env.h)
    "env.r_cap" => (env.r_cap)
    "env.r_comm" => (env.r_comm)
    "env.r_col" => (env.r_col)
    "env.r_col_d" => (env.r_col_d)
    "env.dt" => (env.dt)
    "env.horizon" => (env.horizon)
    "env.z_max" => (env.z_max)
    "agents.n_attackers" => (n_attackers)
    "agents.n_defenders" => (n_defenders)
    "attacker.v_min" => (attacker.v_lo)
    "attacker.v_max" => (attacker.v_hi)
    "attacker.omega_bar" => (attacker.omega_bar)
    "attacker.w_bar" => (attacker.w_bar)
    "defender.v_max" => (defender.v_hi)
    "defender.omega_bar" => (defender.omega_bar)
    "defender.w_bar" => (defender.w_bar)
    "behavior.mode" => (behavior_mode)
    "behavior.k_psi" => (behavior.k_psi)
    "behavior.k_z" => (behavior.k_z)
    "behavior.amp" => (behavior.amp)
    "behavior.nu" => (behavior.nu)
    "behavior.sigma_omega" => (behavior.sigma_omega)
    "behavior.sigma_w" => (behavior.sigma_w)
    "sensing.mode" => (sensing.mode)
    "sensing.sigma_r0" => (sensing.sigma_r0)
    "sensing.k" => (sensing.k_range)
    "sensing.gamma" => (sensing.gamma)
    "sensing.sigma_n" => (sensing.sigma_n)
    "sensing.p_detect_th" => (sensing.p_det_th)
    "sensing.snr0" => (sensing.snr0)
    "sensing.meas_noise_std" => (sensing.meas_noise_std)
    "sensing.r_det" => (sensing.r_det)
    "sensing.c0_sq" => (sensing.c0_sq)
    "sensing.s_floor" => (sensing.s_floor)
    "graph.mode" => (graph.mode)
    "graph.alpha_overlap" => (graph.alpha_go)
    "graph.grid_res" => (graph.grid_res)
    "graph.alpha1" => (graph.alpha[0])
    "graph.alpha2" => (graph.alpha[1])
    "graph.alpha3" => (graph.alpha[2])
    "graph.k_eig" => (graph.k_eig)
    "risk.beta" => (risk.beta)
    "risk.gamma_phi" => (risk.gamma_phi)
    "risk.H" => (risk.h_steps)
    "risk.N_s" => (risk.n_s)
    "risk.eps_fail" => (risk.eps_fail)
    "risk.weights.ttb" => (risk.weights.ttb)
    "risk.weights.cent" => (risk.weights.cent)
    "risk.weights.dist" => (risk.weights.dist)
    "risk.weights.mkv" => (risk.weights.mkv)
    "risk.mix.cur" => (risk.w_cur)
    "risk.mix.fut" => (risk.w_fut)
    "risk.markov_enabled" => (risk.markov_enabled)
    "risk.centrality_enabled" => (risk.centrality_enabled)
    "safety.kappa_col" => (safety.kappa_col)
    "safety.kappa_con" => (safety.kappa_con)
    "safety.kappa_d" => (safety.kappa_d)
    "safety.sigma_c" => (safety.sigma_c)
    "safety.lambda_min" => (safety.lambda_min)
    "safety.enabled" => (safety.enabled)
    "assign.mode" => (assign.mode)
    "assign.big_m" => (assign.big_m)
    "assign.w_t" => (assign.w_t)
    "assign.w_c" => (assign.w_c)
    "assign.r_t" => (assign.r_t)
    "assign.switch_threshold" => (assign.switch_threshold)
    "assign.cooldown" => (assign.cooldown)
    "assign.switching_enabled" => (assign.switching_enabled)
    "assign.n_adm" => (assign.n_adm)
    "sim.substeps" => (sim.substeps)
    "sim.k_pursuit" => (sim.k_pursuit)
    "sim.k_pursuit_z" => (sim.k_pursuit_z)
    "sim.max_lead" => (sim.max_lead)
    "sim.init_r_lo" => (sim.init_r_lo)
    "sim.init_r_hi" => (sim.init_r_hi)
    "sim.heading_spread" => (sim.heading_spread)
    "sim.ttb_horizon_factor" => (sim.ttb_horizon_factor)
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, String)>) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let text = match v {
            toml::Value::Table(t) => {
                flatten(&key, t, out)?;
                continue;
            }
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            other => return Err(Error::BadValue { key, msg: format!("unsupported value {other}") }),
        };
        out.push((key, text));
    }
    Ok(())
}

/// Flatten TOML text into dotted (key, value) pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let mut out = Vec::new();
    flatten("", &table, &mut out)?;
    Ok(out)
}

impl SimConfig {
    /// Deterministic sensing on true positions with a proximity graph.
    pub fn deterministic() -> Self {
        let mut c = SimConfig::default();
        c.sensing.mode = SensingMode::Deterministic;
        c.graph.mode = GraphMode::Proximity;
        c
    }

    /// Range-dependent detection and noisy estimates with the overlap graph.
    pub fn probabilistic() -> Self {
        SimConfig::default()
    }

    /// Apply TOML text on top of `self`. Unknown keys are errors.
    pub fn apply_toml(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_pairs(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut c = SimConfig::default();
        c.apply_toml(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        SimConfig::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Full configuration as TOML with one dotted key per line.
    pub fn to_toml(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| {
                let quoted = KeyValue::parse_value(&v).map(|x: f64| x.is_finite()).unwrap_or(false) || v == "true" || v == "false";
                if quoted {
                    format!("{k} = {v}\n")
                } else {
                    format!("{k} = \"{v}\"\n")
                }
            })
            .collect()
    }

    /// sha256 over the canonical key=value listing.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.sensing.validate()?;
        self.graph.validate()?;
        self.risk.validate()?;
        self.safety.validate()?;
        self.assign.validate(self.env.r_cap)?;
        let a = &self.attacker;
        let d = &self.defender;
        if !(a.v_lo >= 0.0 && a.v_lo <= a.v_hi) || d.v_hi < 0.0 || a.omega_bar < 0.0 || d.omega_bar < 0.0 {
            return Err(Error::Validation("agents: need 0 <= v_min <= v_max and nonnegative turn limits".into()));
        }
        let s = &self.sim;
        if s.substeps == 0 || !(s.init_r_lo > 0.0 && s.init_r_lo <= s.init_r_hi) || s.ttb_horizon_factor <= 0.0 {
            return Err(Error::Validation("sim: need substeps >= 1, 0 < init_r_lo <= init_r_hi".into()));
        }
        Ok(())
    }
}

/// Operating regimes: (v_def_max, P_det_th, r_int, alpha_overlap).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    Nominal,
    DegradedSensing,
    HardKinematics,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Nominal, Regime::DegradedSensing, Regime::HardKinematics];

    pub fn params(self) -> (f64, f64, f64, f64) {
        match self {
            Regime::Nominal => (4.0, 0.10, 1.5, 0.01),
            Regime::DegradedSensing => (4.0, 0.35, 1.5, 0.01),
            Regime::HardKinematics => (3.5, 0.10, 1.2, 0.01),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Nominal => "Nominal",
            Regime::DegradedSensing => "DegradedSensing",
            Regime::HardKinematics => "HardKinematics",
        }
    }

    pub fn apply(self, cfg: &SimConfig) -> SimConfig {
        let (v, p, r, a) = self.params();
        let mut c = cfg.clone();
        c.defender.v_hi = v;
        c.defender.v_lo = c.defender.v_lo.min(v);
        c.sensing.p_det_th = p;
        c.env.r_cap = r;
        c.graph.alpha_go = a;
        c
    }
}

impl FromStr for Regime {
    type Err = Error;
    /// Case-insensitive; underscores are ignored, so `degraded_sensing` works.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('_', "");
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(&key))
            .ok_or_else(|| Error::Validation(format!("unknown regime `{s}`")))
    }
}
