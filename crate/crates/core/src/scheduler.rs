//! Deterministic DDIM schedule with v-parametrization helpers.
//!
//! All coefficient math is done in `f64`; tensors stay `f32`.

use crate::imagecore::{ImageError, LatentTensor};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("invalid step counts: train {train}, inference {inference}")]
    InvalidSteps { train: usize, inference: usize },
    #[error("timestep {0} outside the schedule")]
    BadTimestep(usize),
    #[error("ddim step must move backwards: t = {t}, t_prev = {t_prev}")]
    NotBackwards { t: usize, t_prev: usize },
    #[error(transparent)]
    Shape(#[from] ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSchedule {
    /// Betas linear in sqrt-space between 0.00085 and 0.012.
    #[default]
    ScaledLinear,
}

pub const BETA_START: f64 = 0.00085;
pub const BETA_END: f64 = 0.012;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    train_steps: usize,
    alphas_bar: Vec<f64>,
    timesteps: Vec<usize>,
}

impl NoiseSchedule {
    pub fn new(train_steps: usize, inference_steps: usize, beta_schedule: BetaSchedule) -> Result<Self, ScheduleError> {
        if inference_steps == 0 || inference_steps > train_steps {
            return Err(ScheduleError::InvalidSteps {
                train: train_steps,
                inference: inference_steps,
            });
        }
        let betas: Vec<f64> = match beta_schedule {
            BetaSchedule::ScaledLinear => {
                let (a, b) = (BETA_START.sqrt(), BETA_END.sqrt());
                (0..train_steps)
                    .map(|i| {
                        let s = if train_steps == 1 {
                            a
                        } else {
                            a + (b - a) * i as f64 / (train_steps - 1) as f64
                        };
                        s * s
                    })
                    .collect()
            }
        };
        let mut acc = 1.0;
        let alphas_bar = betas
            .iter()
            .map(|beta| {
                acc *= 1.0 - beta;
                acc
            })
            .collect();
        let ratio = train_steps / inference_steps;
        let timesteps = (0..inference_steps).map(|i| i * ratio).rev().collect();
        Ok(Self {
            train_steps,
            alphas_bar,
            timesteps,
        })
    }

    pub fn train_steps(&self) -> usize {
        self.train_steps
    }

    pub fn alphas_bar(&self) -> &[f64] {
        &self.alphas_bar
    }

    /// Inference timesteps, strictly decreasing.
    pub fn timesteps(&self) -> &[usize] {
        &self.timesteps
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64, ScheduleError> {
        self.alphas_bar.get(t).copied().ok_or(ScheduleError::BadTimestep(t))
    }

    /// Pairs `(t, t_prev)` visited by the sampler; the last pair has `None`.
    pub fn step_pairs(&self) -> impl Iterator<Item = (usize, Option<usize>)> + '_ {
        self.timesteps
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, self.timesteps.get(i + 1).copied()))
    }

    pub fn add_noise(&self, x0: &LatentTensor, eps: &LatentTensor, t: usize) -> Result<LatentTensor, ScheduleError> {
        Ok(add_noise_at(x0, eps, self.alpha_bar(t)?)?)
    }

    pub fn v_from(&self, x0: &LatentTensor, eps: &LatentTensor, t: usize) -> Result<VPrediction, ScheduleError> {
        Ok(v_from_at(x0, eps, self.alpha_bar(t)?)?)
    }

    pub fn x0_from(&self, x_t: &LatentTensor, v: &VPrediction, t: usize) -> Result<LatentTensor, ScheduleError> {
        Ok(x0_from_at(x_t, v, self.alpha_bar(t)?)?)
    }

    pub fn eps_from(&self, x_t: &LatentTensor, v: &VPrediction, t: usize) -> Result<LatentTensor, ScheduleError> {
        Ok(eps_from_at(x_t, v, self.alpha_bar(t)?)?)
    }

    /// Deterministic (eta = 0) DDIM update from `t` to `t_prev`; `None`
    /// returns the clean estimate.
    pub fn ddim_step(
        &self,
        z_t: &LatentTensor,
        v: &VPrediction,
        t: usize,
        t_prev: Option<usize>,
    ) -> Result<LatentTensor, ScheduleError> {
        let ab = self.alpha_bar(t)?;
        let prev = match t_prev {
            Some(tp) if tp >= t => return Err(ScheduleError::NotBackwards { t, t_prev: tp }),
            Some(tp) => Some(self.alpha_bar(tp)?),
            None => None,
        };
        Ok(ddim_step_at(z_t, v, ab, prev)?)
    }
}

/// Network output in v-parametrization: `v = sqrt(ab) eps - sqrt(1 - ab) x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct VPrediction(pub LatentTensor);

impl VPrediction {
    pub fn tensor(&self) -> &LatentTensor {
        &self.0
    }

    pub fn into_tensor(self) -> LatentTensor {
        self.0
    }
}

#[inline]
fn coeffs(alpha_bar: f64) -> (f64, f64) {
    (alpha_bar.sqrt(), (1.0 - alpha_bar).max(0.0).sqrt())
}

/// `x_t = sqrt(ab) x0 + sqrt(1 - ab) eps`
pub fn add_noise_at(x0: &LatentTensor, eps: &LatentTensor, alpha_bar: f64) -> Result<LatentTensor, ImageError> {
    let (a, s) = coeffs(alpha_bar);
    x0.zip_map(eps, |x, e| a * x + s * e)
}

pub fn v_from_at(x0: &LatentTensor, eps: &LatentTensor, alpha_bar: f64) -> Result<VPrediction, ImageError> {
    let (a, s) = coeffs(alpha_bar);
    Ok(VPrediction(x0.zip_map(eps, |x, e| a * e - s * x)?))
}

pub fn x0_from_at(x_t: &LatentTensor, v: &VPrediction, alpha_bar: f64) -> Result<LatentTensor, ImageError> {
    let (a, s) = coeffs(alpha_bar);
    x_t.zip_map(&v.0, |z, v| a * z - s * v)
}

pub fn eps_from_at(x_t: &LatentTensor, v: &VPrediction, alpha_bar: f64) -> Result<LatentTensor, ImageError> {
    let (a, s) = coeffs(alpha_bar);
    x_t.zip_map(&v.0, |z, v| s * z + a * v)
}

/// Converts a noise prediction into a v-prediction at the same timestep.
pub fn v_from_eps_at(x_t: &LatentTensor, eps: &LatentTensor, alpha_bar: f64) -> Result<VPrediction, ImageError> {
    // x0 = (x_t - s eps) / a, v = a eps - s x0
    let (a, s) = coeffs(alpha_bar);
    Ok(VPrediction(x_t.zip_map(eps, |z, e| {
        let x0 = (z - s * e) / a;
        a * e - s * x0
    })?))
}

pub fn ddim_step_at(
    z_t: &LatentTensor,
    v: &VPrediction,
    alpha_bar: f64,
    alpha_bar_prev: Option<f64>,
) -> Result<LatentTensor, ImageError> {
    let (a, s) = coeffs(alpha_bar);
    match alpha_bar_prev {
        None => z_t.zip_map(&v.0, |z, v| a * z - s * v),
        Some(abp) => {
            let (ap, sp) = coeffs(abp);
            z_t.zip_map(&v.0, |z, v| {
                let x0 = a * z - s * v;
                let eps = s * z + a * v;
                ap * x0 + sp * eps
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn scalar(v: f32) -> LatentTensor {
        LatentTensor::new(1, 1, 1, vec![v]).unwrap()
    }

    fn randn(seed: u64) -> LatentTensor {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        LatentTensor::randn(4, 8, 8, &mut rng)
    }

    #[test]
    fn full_schedule_timesteps() {
        let s = NoiseSchedule::new(1000, 1000, BetaSchedule::ScaledLinear).unwrap();
        assert_eq!(s.timesteps(), (0..1000).rev().collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn fifty_step_spacing() {
        let s = NoiseSchedule::new(1000, 50, BetaSchedule::ScaledLinear).unwrap();
        assert_eq!(s.timesteps().len(), 50);
        assert_eq!(s.timesteps()[0], 980);
        assert!(s.timesteps().windows(2).all(|w| w[0] - w[1] == 20));
        assert_eq!(*s.timesteps().last().unwrap(), 0);
    }

    #[test]
    fn alpha_bar_strictly_decreasing() {
        for (train, inf) in [(1000, 50), (10, 3), (2, 1), (1, 1)] {
            let s = NoiseSchedule::new(train, inf, BetaSchedule::ScaledLinear).unwrap();
            assert!(s.alphas_bar().windows(2).all(|w| w[1] < w[0]));
            assert!((s.alphas_bar()[0] - (1.0 - BETA_START)).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_steps() {
        assert!(NoiseSchedule::new(10, 0, BetaSchedule::ScaledLinear).is_err());
        assert!(NoiseSchedule::new(10, 11, BetaSchedule::ScaledLinear).is_err());
    }

    #[test]
    fn add_noise_limits() {
        let (x0, eps) = (randn(1), randn(2));
        assert_eq!(add_noise_at(&x0, &eps, 1.0).unwrap(), x0);
        assert_eq!(add_noise_at(&x0, &eps, 0.0).unwrap(), eps);
        assert_eq!(add_noise_at(&scalar(1.0), &scalar(0.0), 0.25).unwrap().data()[0], 0.5);
    }

    #[test]
    fn v_scalar_and_noiseless_endpoint() {
        let v = v_from_at(&scalar(2.0), &scalar(0.0), 0.5).unwrap();
        assert!((v.0.data()[0] as f64 + std::f64::consts::SQRT_2).abs() < 1e-6);
        let (x0, eps) = (randn(3), randn(4));
        assert_eq!(v_from_at(&x0, &eps, 1.0).unwrap().0, eps);
        let xt = randn(5);
        assert_eq!(x0_from_at(&xt, &VPrediction(eps), 1.0).unwrap(), xt);
    }

    #[test]
    fn conversions_round_trip() {
        let s = NoiseSchedule::new(1000, 50, BetaSchedule::ScaledLinear).unwrap();
        let (x0, eps) = (randn(6), randn(7));
        for t in [0, 1, 250, 500, 999] {
            let xt = s.add_noise(&x0, &eps, t).unwrap();
            let v = s.v_from(&x0, &eps, t).unwrap();
            assert!(s.x0_from(&xt, &v, t).unwrap().max_abs_diff(&x0) < 1e-5);
            assert!(s.eps_from(&xt, &v, t).unwrap().max_abs_diff(&eps) < 1e-5);
            let v2 = v_from_eps_at(&xt, &eps, s.alpha_bar(t).unwrap()).unwrap();
            assert!(v2.0.max_abs_diff(&v.0) < 1e-4, "t={t}");
        }
    }

    #[test]
    fn step_lands_on_trajectory() {
        let s = NoiseSchedule::new(1000, 50, BetaSchedule::ScaledLinear).unwrap();
        let (x0, eps) = (randn(8), randn(9));
        for (t, tp) in [(980, Some(960)), (500, Some(20)), (999, Some(0)), (40, None)] {
            let zt = s.add_noise(&x0, &eps, t).unwrap();
            let v = s.v_from(&x0, &eps, t).unwrap();
            let stepped = s.ddim_step(&zt, &v, t, tp).unwrap();
            let expected = match tp {
                Some(tp) => s.add_noise(&x0, &eps, tp).unwrap(),
                None => x0.clone(),
            };
            assert!(stepped.max_abs_diff(&expected) < 1e-5);
            assert_eq!(stepped, s.ddim_step(&zt, &v, t, tp).unwrap());
        }
        assert!(matches!(
            s.ddim_step(&x0, &VPrediction(eps), 20, Some(40)),
            Err(ScheduleError::NotBackwards { .. })
        ));
    }

    #[test]
    fn oracle_chain_reconstructs_from_any_start() {
        let s = NoiseSchedule::new(1000, 50, BetaSchedule::ScaledLinear).unwrap();
        let (x0, eps) = (randn(10), randn(11));
        for start in [0usize, 10, 25, 49] {
            let pairs: Vec<_> = s.step_pairs().skip(start).collect();
            let mut z = s.add_noise(&x0, &eps, pairs[0].0).unwrap();
            for (t, tp) in pairs {
                let v = s.v_from(&x0, &eps, t).unwrap();
                z = s.ddim_step(&z, &v, t, tp).unwrap();
            }
            assert!(z.max_abs_diff(&x0) <= 1e-4);
        }
    }

    #[test]
    fn defining_identity_holds() {
        let s = NoiseSchedule::new(1000, 50, BetaSchedule::ScaledLinear).unwrap();
        let (x0, eps) = (randn(12), randn(13));
        for &t in s.timesteps() {
            let xt = s.add_noise(&x0, &eps, t).unwrap();
            let v = s.v_from(&x0, &eps, t).unwrap();
            let rx = s.x0_from(&xt, &v, t).unwrap();
            let re = s.eps_from(&xt, &v, t).unwrap();
            let rebuilt = s.add_noise(&rx, &re, t).unwrap();
            assert!(rebuilt.max_abs_diff(&xt) < 1e-5);
        }
    }
}
