//! Detection model, Gaussian position reports and confidence-ellipsoid sampling.

use crate::error::{Error, Result};
use crate::geometry::{dist, Vec3};
use crate::kinematics::AgentState;
use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub type Mat3 = [[f64; 3]; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingMode {
    Deterministic,
    Probabilistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensingParams {
    pub mode: SensingMode,
    pub sensor_pos: Vec3,
    pub r_det: f64,
    pub sigma_r0: f64,
    pub k_range: f64,
    pub gamma: f64,
    pub sigma_n: f64,
    pub p_det_th: f64,
    pub snr0: f64,
    pub meas_noise_std: f64,
    pub c0_sq: f64,
    pub s_floor: f64,
}

impl Default for SensingParams {
    fn default() -> Self {
        SensingParams {
            mode: SensingMode::Probabilistic,
            sensor_pos: [0.0; 3],
            r_det: 50.0,
            sigma_r0: 10.0,
            k_range: 0.2,
            gamma: 8.0,
            sigma_n: 5.0,
            p_det_th: 0.10,
            snr0: 40.0,
            meas_noise_std: 1.0,
            c0_sq: 7.8147,
            s_floor: 0.05,
        }
    }
}

impl SensingParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.p_det_th > 0.0
            && self.p_det_th <= 1.0
            && self.sigma_r0 > 0.0
            && self.sigma_n > 0.0
            && self.c0_sq > 0.0
            && self.meas_noise_std >= 0.0
            && self.s_floor > 0.0
            && self.s_floor <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation("sensing parameters out of range".into()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub id: usize,
    pub mu: Vec3,
    pub sigma: Mat3,
    pub p_d: f64,
    pub detected: bool,
    pub s_conf: f64,
}

/// Gaussian upper tail Q(x) = P(N(0,1) > x).
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

pub fn snr_db(range: f64, sp: &SensingParams) -> f64 {
    sp.snr0 - 20.0 * range.max(1.0).log10()
}

pub fn detection_probability(range: f64, sp: &SensingParams) -> f64 {
    let sigma_r = sp.sigma_r0 + sp.k_range * range;
    let p_fn = 1.0 - q_function((sp.gamma - snr_db(range, sp)) / sp.sigma_n);
    let spatial = (-(range * range) / (2.0 * sigma_r * sigma_r)).exp();
    (spatial * (1.0 - p_fn)).clamp(0.0, 1.0)
}

pub fn isotropic(var: f64) -> Mat3 {
    [[var, 0.0, 0.0], [0.0, var, 0.0], [0.0, 0.0, var]]
}

/// One report per live agent; `id` is the index in `true_states`.
pub fn sense<R: Rng>(true_states: &[AgentState], sp: &SensingParams, rng: &mut R) -> Vec<DetectionReport> {
    let mut out = Vec::with_capacity(true_states.len());
    for (id, s) in true_states.iter().enumerate() {
        if !s.alive {
            continue;
        }
        let range = dist(&s.p, &sp.sensor_pos);
        let rep = match sp.mode {
            SensingMode::Deterministic => {
                let detected = range <= sp.r_det;
                let p_d = if detected { 1.0 } else { 0.0 };
                DetectionReport { id, mu: s.p, sigma: [[0.0; 3]; 3], p_d, detected, s_conf: p_d.max(sp.s_floor) }
            }
            SensingMode::Probabilistic => {
                let std = sp.meas_noise_std * (1.0 + sp.k_range * range / sp.sigma_r0);
                let mut mu = s.p;
                for c in mu.iter_mut() {
                    let n: f64 = StandardNormal.sample(rng);
                    *c += std * n;
                }
                let p_d = detection_probability(range, sp);
                DetectionReport {
                    id,
                    mu,
                    sigma: isotropic(std * std),
                    p_d,
                    detected: p_d >= sp.p_det_th,
                    s_conf: p_d.max(sp.s_floor),
                }
            }
        };
        out.push(rep);
    }
    out
}

/// Square-root factor S with S Sᵀ = Σ, or an error when Σ is not PSD.
pub fn sqrt_factor(sigma: &Mat3) -> Result<Matrix3<f64>> {
    let m = Matrix3::from_fn(|i, j| sigma[i][j]);
    if (m - m.transpose()).abs().max() > 1e-9 * (1.0 + m.abs().max()) {
        return Err(Error::Validation("covariance not symmetric".into()));
    }
    let eig = SymmetricEigen::new(m);
    let scale = 1.0 + m.abs().max();
    if eig.eigenvalues.iter().any(|&l| l < -1e-12 * scale) {
        return Err(Error::Validation("covariance not positive semidefinite".into()));
    }
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(eig.eigenvectors * Matrix3::from_diagonal(&root))
}

/// Uniform samples inside {ξ : ξᵀ Σ⁻¹ ξ <= c0_sq}.
pub fn sample_ellipsoid<R: Rng>(rep: &DetectionReport, n: usize, c0_sq: f64, rng: &mut R) -> Result<Vec<Vec3>> {
    let s = sqrt_factor(&rep.sigma)? * c0_sq.sqrt();
    let zero = s.iter().all(|&x| x == 0.0);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        if zero {
            out.push([0.0; 3]);
            continue;
        }
        let g: Vector3<f64> = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        let nrm = g.norm();
        let r: f64 = rng.random::<f64>().cbrt();
        let u = if nrm > 0.0 { g * (r / nrm) } else { Vector3::zeros() };
        let x = s * u;
        out.push([x[0], x[1], x[2]]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Subsystem};

    #[test]
    fn zero_range_high_snr_is_near_one() {
        let sp = SensingParams { snr0: 120.0, ..Default::default() };
        assert!(detection_probability(0.0, &sp) > 1.0 - 1e-9);
    }

    #[test]
    fn at_threshold_snr_false_negative_is_half() {
        let sp = SensingParams::default();
        // snr0 - 20 log10(r) = gamma  =>  r = 10^((snr0 - gamma)/20)
        let r = 10f64.powf((sp.snr0 - sp.gamma) / 20.0);
        let sr = sp.sigma_r0 + sp.k_range * r;
        let expect = 0.5 * (-(r * r) / (2.0 * sr * sr)).exp();
        assert!((detection_probability(r, &sp) - expect).abs() < 1e-12);
    }

    #[test]
    fn monotone_on_grid() {
        let sp = SensingParams::default();
        let vals: Vec<f64> = (0..100).map(|i| detection_probability(i as f64 * 0.8, &sp)).collect();
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn frozen_detection_values() {
        // hand evaluation: sigma_r = 16, SNR = 40 - 20 log10 30 = 10.4576,
        // P(no FN) = Q((8 - 10.4576)/5) = Q(-0.49152) = 0.68847
        let sp = SensingParams::default();
        let expect = (-900.0f64 / 512.0).exp() * 0.688_469;
        assert!((detection_probability(30.0, &sp) - expect).abs() < 1e-5);
    }

    #[test]
    fn deterministic_reports() {
        let sp = SensingParams { mode: SensingMode::Deterministic, r_det: 30.0, ..Default::default() };
        let st = vec![AgentState::new([20.0, 0.0, 5.0], 0.0, 1.0), AgentState::new([40.0, 0.0, 5.0], 0.0, 1.0)];
        let reps = sense(&st, &sp, &mut stream(0, Subsystem::Sensing, 0, 0));
        assert!(reps[0].detected && !reps[1].detected);
        assert_eq!(reps[0].sigma, [[0.0; 3]; 3]);
        assert_eq!(reps[0].mu, st[0].p);
    }

    #[test]
    fn noiseless_probabilistic_is_exact() {
        let sp = SensingParams { meas_noise_std: 0.0, ..Default::default() };
        let st = vec![AgentState::new([20.0, 3.0, 5.0], 0.0, 1.0)];
        let reps = sense(&st, &sp, &mut stream(0, Subsystem::Sensing, 0, 0));
        assert_eq!(reps[0].mu, st[0].p);
    }

    #[test]
    fn range_thirty_flag_matches_probability() {
        let sp = SensingParams::default();
        let st = vec![AgentState::new([30.0, 0.0, 0.0], 0.0, 1.0)];
        let reps = sense(&st, &sp, &mut stream(0, Subsystem::Sensing, 0, 0));
        assert_eq!(reps[0].detected, detection_probability(30.0, &sp) >= 0.10);
        assert!(reps[0].s_conf >= sp.s_floor);
    }

    #[test]
    fn ellipsoid_degenerate_and_bounded() {
        let mut rep = DetectionReport { id: 0, mu: [0.0; 3], sigma: [[0.0; 3]; 3], p_d: 1.0, detected: true, s_conf: 1.0 };
        let mut rng = stream(3, Subsystem::Markov, 0, 0);
        assert!(sample_ellipsoid(&rep, 10, 7.8147, &mut rng).unwrap().iter().all(|x| *x == [0.0; 3]));
        rep.sigma = isotropic(1.0);
        let xs = sample_ellipsoid(&rep, 2000, 7.8147, &mut rng).unwrap();
        assert!(xs.iter().all(|x| crate::geometry::norm(x) <= 7.8147f64.sqrt() + 1e-12));
        rep.sigma[0][0] = -1.0;
        assert!(sample_ellipsoid(&rep, 1, 7.8147, &mut rng).is_err());
    }

    #[test]
    fn ellipsoid_radial_moment() {
        let sig = 2.0;
        let rep = DetectionReport { id: 0, mu: [0.0; 3], sigma: isotropic(sig * sig), p_d: 1.0, detected: true, s_conf: 1.0 };
        let mut rng = stream(11, Subsystem::Markov, 0, 0);
        let xs = sample_ellipsoid(&rep, 100_000, 7.8147, &mut rng).unwrap();
        let m = xs.iter().map(|x| crate::geometry::norm(x) / sig).sum::<f64>() / xs.len() as f64;
        let expect = 0.75 * 7.8147f64.sqrt();
        assert!((m / expect - 1.0).abs() < 0.01, "{m} vs {expect}");
    }
}
