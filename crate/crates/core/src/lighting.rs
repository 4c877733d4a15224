//! Parametric lighting: a spherical gaussian plus constant ambient term,
//! ambient estimation from a background, and the fixed direction sets used
//! for user-controlled relighting.

use crate::imagecore::{ColorSpace, ImageError, PixelMap};
use crate::shadowsynth::{DirectionalLight, GroundFrame, ShadowError};
use nalgebra::Vector3;
use rand::Rng;
use thiserror::Error;

pub type Rgb = [f64; 3];

/// Default spherical-gaussian bandwidth.
pub const DEFAULT_LAMBDA: f64 = 300.0;
/// Default dominant-light to ambient intensity ratio.
pub const DEFAULT_K: f64 = 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LightingError {
    #[error("invalid environment parameters: {0}")]
    Params(String),
    #[error("ambient color is zero")]
    ZeroAmbient,
    #[error("image is empty")]
    EmptyImage,
    #[error("direction count must be odd and at least 1, got {0}")]
    EvenCount(usize),
    #[error(transparent)]
    Shadow(#[from] ShadowError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// `L(w) = c_light exp(lambda (w . v - 1)) + c_amb` in a world frame with
/// +Y up and +Z forward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvMapParams {
    pub c_light: Rgb,
    pub c_amb: Rgb,
    pub lambda: f64,
    pub v: Vector3<f64>,
    pub k: f64,
}

impl EnvMapParams {
    pub fn new(c_light: Rgb, c_amb: Rgb, lambda: f64, v: Vector3<f64>, k: f64) -> Result<Self, LightingError> {
        let p = Self {
            c_light,
            c_amb,
            lambda,
            v,
            k,
        };
        p.validate()?;
        Ok(p)
    }

    /// Ambient from the background mean, `c_light = k * c_amb / |c_amb|`.
    pub fn from_background(bg: &PixelMap, v: Vector3<f64>, k: f64, lambda: f64) -> Result<Self, LightingError> {
        let c_amb = ambient_from_background(bg)?;
        Self::new(light_color(c_amb, k)?, c_amb, lambda, v, k)
    }

    pub fn validate(&self) -> Result<(), LightingError> {
        let colors_ok = self
            .c_light
            .iter()
            .chain(&self.c_amb)
            .all(|c| c.is_finite() && *c >= 0.0);
        if !colors_ok {
            return Err(LightingError::Params("colors must be finite and nonnegative".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(LightingError::Params(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if (self.v.norm() - 1.0).abs() > 1e-9 {
            return Err(LightingError::Params("v must be a unit vector".into()));
        }
        Ok(())
    }
}

/// `c_light * exp(lambda (w . v - 1)) + c_amb` for unit `w`. The exponent is
/// evaluated as `-lambda |w - v|^2 / 2`, which equals it for unit vectors and
/// avoids cancellation near the lobe peak.
pub fn eval_envmap(omega: &Vector3<f64>, p: &EnvMapParams) -> Rgb {
    let g = (-0.5 * p.lambda * (omega - p.v).norm_squared()).exp();
    std::array::from_fn(|i| p.c_light[i] * g + p.c_amb[i])
}

/// Closed-form sphere integral of the lobe `exp(lambda (w . v - 1))`.
pub fn sg_integral(lambda: f64) -> f64 {
    2.0 * std::f64::consts::PI * (1.0 - (-2.0 * lambda).exp()) / lambda
}

/// Per-channel mean of a linear image.
pub fn ambient_from_background(bg: &PixelMap) -> Result<Rgb, LightingError> {
    if bg.width() == 0 || bg.height() == 0 {
        return Err(LightingError::EmptyImage);
    }
    if bg.space() != ColorSpace::Linear {
        return Err(LightingError::Params("background must be linear".into()));
    }
    let rgb = bg.to_rgb();
    let n = (rgb.width() * rgb.height()) as f64;
    let mut sum = [0.0; 3];
    for px in rgb.data().chunks_exact(3) {
        for c in 0..3 {
            sum[c] += px[c];
        }
    }
    Ok(sum.map(|s| s / n))
}

/// `k * c_amb / |c_amb|`: the ambient chroma at norm `k`.
pub fn light_color(c_amb: Rgb, k: f64) -> Result<Rgb, LightingError> {
    let norm = c_amb.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(LightingError::ZeroAmbient);
    }
    Ok(c_amb.map(|c| k * c / norm))
}

/// `count` lights at a fixed elevation, 45 degrees apart in azimuth and
/// symmetric about the behind-object axis (azimuth 0).
pub fn user_controlled_directions(
    elevation_deg: f64,
    count: usize,
    frame: &GroundFrame,
) -> Result<Vec<DirectionalLight>, LightingError> {
    if count.is_multiple_of(2) {
        return Err(LightingError::EvenCount(count));
    }
    let mid = (count as f64 - 1.0) / 2.0;
    (0..count)
        .map(|i| {
            Ok(DirectionalLight::from_angles(
                (i as f64 - mid) * 45.0,
                elevation_deg,
                frame,
            )?)
        })
        .collect()
}

/// Camera-space light direction expressed in the environment frame
/// (+X right, +Y up, +Z forward).
pub fn envmap_direction(light: &DirectionalLight, frame: &GroundFrame) -> Vector3<f64> {
    let d = light.direction;
    Vector3::new(d.dot(&frame.right()), d.dot(&frame.up), d.dot(&frame.forward)).normalize()
}

/// Unit direction for continuous lat-long coordinates in `[0, 1)^2`:
/// `v = 0` is the zenith (+Y), `u = 0.5` faces +Z.
pub fn latlong_direction(u: f64, v: f64) -> Vector3<f64> {
    let theta = v * std::f64::consts::PI;
    let phi = (u - 0.5) * 2.0 * std::f64::consts::PI;
    Vector3::new(theta.sin() * phi.sin(), theta.cos(), theta.sin() * phi.cos())
}

/// Equirectangular raster of the environment, sampled at pixel centers.
pub fn latlong(p: &EnvMapParams, width: usize, height: usize) -> Result<PixelMap, LightingError> {
    p.validate()?;
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroSize(width, height).into());
    }
    Ok(PixelMap::from_fn(width, height, 3, ColorSpace::Linear, |x, y, c| {
        let dir = latlong_direction((x as f64 + 0.5) / width as f64, (y as f64 + 0.5) / height as f64);
        eval_envmap(&dir, p)[c]
    })?)
}

/// Jittered-stratified estimate of a sphere integral with `n_side^2`
/// uniform samples (equal-area strata in `cos theta` and `phi`).
pub fn sphere_integral_stratified<R: Rng + ?Sized>(
    n_side: usize,
    rng: &mut R,
    f: impl Fn(&Vector3<f64>) -> f64,
) -> f64 {
    let n = n_side as f64;
    let mut sum = 0.0;
    for i in 0..n_side {
        for j in 0..n_side {
            let z = 1.0 - 2.0 * (i as f64 + rng.random::<f64>()) / n;
            let phi = 2.0 * std::f64::consts::PI * (j as f64 + rng.random::<f64>()) / n;
            let r = (1.0 - z * z).max(0.0).sqrt();
            sum += f(&Vector3::new(r * phi.cos(), r * phi.sin(), z));
        }
    }
    4.0 * std::f64::consts::PI * sum / (n * n)
}
