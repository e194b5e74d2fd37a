//! Protected-zone geometry: the hard breach cylinder, the soft warning ring and
//! the planar zone map used by the Markov layer.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub r_hard: f64,
    pub r_soft: f64,
    pub h: f64,
    pub r_cap: f64,
    pub r_comm: f64,
    pub r_col: f64,
    pub r_col_d: f64,
    pub dt: f64,
    pub horizon: usize,
    /// Altitude ceiling for all agents.
    pub z_max: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            r_hard: 10.0,
            r_soft: 15.0,
            h: 20.0,
            r_cap: 1.5,
            r_comm: 25.0,
            r_col: 1.0,
            r_col_d: 1.0,
            dt: 1.0,
            horizon: 200,
            z_max: 40.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("env: {m}")));
        if !(self.r_hard > 0.0 && self.r_hard < self.r_soft) {
            return bad("need 0 < r_hard < r_soft");
        }
        if !(self.r_cap > 0.0 && self.r_cap < self.r_comm) {
            return bad("need 0 < r_cap < r_comm");
        }
        if !(self.h > 0.0) || self.horizon < 1 {
            return bad("need h > 0 and horizon >= 1");
        }
        if !(self.dt > 0.0) || !(self.z_max >= self.h) {
            return bad("need dt > 0 and z_max >= h");
        }
        if !(self.r_col > 0.0 && self.r_col_d > 0.0) {
            return bad("collision radii must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Zone {
    Outside = 0,
    Soft = 1,
    Hard = 2,
}

impl Zone {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[inline]
pub fn planar_radius(p: &Vec3) -> f64 {
    p[0].hypot(p[1])
}

pub fn zone_of(p: &Vec3, env: &EnvConfig) -> Zone {
    let rho = planar_radius(p);
    if rho >= env.r_soft {
        Zone::Outside
    } else if rho <= env.r_hard {
        Zone::Hard
    } else {
        Zone::Soft
    }
}

/// Distance to the closed cylinder {rho <= r_hard, 0 <= z <= h}.
pub fn dist_to_hard(p: &Vec3, env: &EnvConfig) -> f64 {
    let radial = (planar_radius(p) - env.r_hard).max(0.0);
    let vertical = if p[2] < 0.0 {
        -p[2]
    } else if p[2] > env.h {
        p[2] - env.h
    } else {
        0.0
    };
    radial.hypot(vertical)
}

/// Breach set membership (3D).
pub fn in_hard(p: &Vec3, env: &EnvConfig) -> bool {
    planar_radius(p) <= env.r_hard && p[2] >= 0.0 && p[2] <= env.h
}

pub(crate) fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm(a: &Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}


pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn dist(a: &Vec3, b: &Vec3) -> f64 {
    norm(&sub(a, b))
}
