//! Shadow-conditioned sampler: latent shadow blending, two-branch denoiser
//! evaluation and object-masked guidance inside a deterministic DDIM loop.

mod sampler;

pub use sampler::{run_sampler, NegativeUsed, SamplerOutput, StepTrace};

use crate::denoisers::SidecarError;
use crate::imagecore::{ColorSpace, ImageError, IntrinsicKind, IntrinsicStack, LatentTensor, MaskMap, PixelMap};
use crate::scheduler::{ScheduleError, VPrediction};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which conditioning the negative branch receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeMode {
    /// Shadow cast by the light rotated 180 degrees in azimuth; falls back to
    /// `NoShadow` when the scene has no parametric light.
    #[default]
    Opposite,
    /// Same scene with an empty shadow mask.
    NoShadow,
    /// Single positive branch; guidance is skipped.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    /// Guidance scale inside the object mask.
    pub gamma: f64,
    /// Shadow latent weight.
    pub beta: f64,
    pub dilation_kernel: usize,
    pub steps: usize,
    pub train_steps: usize,
    pub seed: u64,
    /// Linear-space darkening of the painted shadow in the guidance composite.
    pub shadow_gain: f64,
    pub negative: NegativeMode,
    /// Turns latent shadow blending off entirely.
    pub blend: bool,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            gamma: 3.0,
            beta: 0.05,
            dilation_kernel: 33,
            steps: 50,
            train_steps: 1000,
            seed: 0,
            shadow_gain: 0.4,
            negative: NegativeMode::Opposite,
            blend: true,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |msg: String| Err(SamplerError::Config(msg));
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta must be in [0, 1], got {}", self.beta));
        }
        if self.dilation_kernel == 0 || self.dilation_kernel.is_multiple_of(2) {
            return bad(format!("dilation kernel must be odd, got {}", self.dilation_kernel));
        }
        if self.steps == 0 || self.steps > self.train_steps {
            return bad(format!("steps must be in 1..={}, got {}", self.train_steps, self.steps));
        }
        if !(self.shadow_gain > 0.0 && self.shadow_gain <= 1.0) {
            return bad(format!("shadow_gain must be in (0, 1], got {}", self.shadow_gain));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Positive,
    Negative,
}

impl Branch {
    pub fn wire_id(self) -> u8 {
        match self {
            Branch::Positive => 0,
            Branch::Negative => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PredictionKind {
    #[default]
    V,
    Eps,
}

/// Conditioning for one branch at image resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchInputs {
    pub intrinsics: IntrinsicStack,
    pub shadow_mask: MaskMap,
    pub object_mask: MaskMap,
    pub guidance_composite: PixelMap,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error(transparent)]
    Sidecar(#[from] SidecarError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("{0}")]
    Other(String),
}

/// The denoising network `v = f(z, i, t)`.
///
/// Implementations must be deterministic for fixed inputs. The sampler only
/// calls the two branches concurrently when `concurrent_branches` is true.
pub trait Denoiser: Send + Sync {
    fn prediction_kind(&self) -> PredictionKind {
        PredictionKind::V
    }

    fn denoise(
        &self,
        latents: &LatentTensor,
        inputs: &BranchInputs,
        timestep: usize,
        branch: Branch,
    ) -> Result<LatentTensor, BackendError>;

    fn concurrent_branches(&self) -> bool {
        false
    }
}

/// Image <-> latent codec.
pub trait Codec: Send + Sync {
    /// Spatial reduction factor between image and latent.
    fn downscale(&self) -> usize;
    fn latent_channels(&self) -> usize;
    fn encode(&self, img: &PixelMap) -> Result<LatentTensor, BackendError>;
    fn decode(&self, latents: &LatentTensor) -> Result<PixelMap, BackendError>;
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("denoiser failed at step {step} (t = {timestep}): {source}")]
    Denoiser {
        step: usize,
        timestep: usize,
        #[source]
        source: BackendError,
    },
    #[error("codec failed: {0}")]
    Codec(#[source] BackendError),
    #[error("non-finite latents at step {step} (t = {timestep})")]
    NonFinite { step: usize, timestep: usize },
}

/// Everything one render needs, at image resolution and in linear space.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub background: PixelMap,
    pub intrinsics: IntrinsicStack,
    pub object_albedo: PixelMap,
    pub object_mask: MaskMap,
    pub positive_shadow: MaskMap,
    /// Shadow of the opposite light, when the scene has a parametric light.
    pub negative_shadow: Option<MaskMap>,
}

impl SceneBundle {
    pub fn validate(&self) -> Result<(), ImageError> {
        let bg = &self.background;
        bg.same_dims(&self.object_albedo)?;
        bg.check_mask(&self.object_mask)?;
        bg.check_mask(&self.positive_shadow)?;
        if let Some(n) = &self.negative_shadow {
            bg.check_mask(n)?;
        }
        if let Some((w, h)) = self.intrinsics.dims() {
            if (w, h) != (bg.width(), bg.height()) {
                return Err(ImageError::DimensionMismatch {
                    expected: bg.dims(),
                    actual: (w, h, 0),
                });
            }
        }
        Ok(())
    }
}

/// Latent shadow blend:
/// `z~ = (1 - beta m) z + beta m noise(g, t)` with fresh noise from `rng`.
pub fn blend_shadow_latents<R: Rng + ?Sized>(
    z_t: &LatentTensor,
    g_lat: &LatentTensor,
    m_shw_lat: &MaskMap,
    alpha_bar: f64,
    beta: f64,
    rng: &mut R,
) -> Result<LatentTensor, ImageError> {
    z_t.same_shape(g_lat)?;
    let (c, h, w) = z_t.shape();
    if (m_shw_lat.width(), m_shw_lat.height()) != (w, h) {
        return Err(ImageError::DimensionMismatch {
            expected: (w, h, 1),
            actual: (m_shw_lat.width(), m_shw_lat.height(), 1),
        });
    }
    let eps = LatentTensor::randn(c, h, w, rng);
    let noised = crate::scheduler::add_noise_at(g_lat, &eps, alpha_bar)?;
    if beta == 0.0 {
        return Ok(z_t.clone());
    }
    let plane = h * w;
    let data = z_t
        .data()
        .iter()
        .zip(noised.data())
        .enumerate()
        .map(|(i, (&z, &n))| {
            let wgt = beta * m_shw_lat.data()[i % plane];
            if wgt == 0.0 {
                z
            } else {
                ((1.0 - wgt) * z as f64 + wgt * n as f64) as f32
            }
        })
        .collect();
    LatentTensor::new(c, h, w, data)
}

/// Object-masked guidance:
/// `v~ = (1 - m) v_pos + m (v_neg + gamma (v_pos - v_neg))`.
///
/// Evaluated as `v_pos + m (gamma - 1)(v_pos - v_neg)`, which is the same
/// expression and keeps `v~ == v_pos` bitwise wherever `m = 0` or `gamma = 1`.
pub fn masked_guidance(
    v_pos: &VPrediction,
    v_neg: &VPrediction,
    m_obj_lat: &MaskMap,
    gamma: f64,
) -> Result<VPrediction, ImageError> {
    let (p, n) = (v_pos.tensor(), v_neg.tensor());
    p.same_shape(n)?;
    let (c, h, w) = p.shape();
    if (m_obj_lat.width(), m_obj_lat.height()) != (w, h) {
        return Err(ImageError::DimensionMismatch {
            expected: (w, h, 1),
            actual: (m_obj_lat.width(), m_obj_lat.height(), 1),
        });
    }
    if gamma == 1.0 {
        return Ok(v_pos.clone());
    }
    let plane = h * w;
    let data = p
        .data()
        .iter()
        .zip(n.data())
        .enumerate()
        .map(|(i, (&vp, &vn))| {
            let m = m_obj_lat.data()[i % plane];
            if m == 0.0 {
                vp
            } else {
                (vp as f64 + m * (gamma - 1.0) * (vp as f64 - vn as f64)) as f32
            }
        })
        .collect();
    Ok(VPrediction(LatentTensor::new(c, h, w, data)?))
}

/// Conditioning maps for a branch: the shadow is painted into the shading
/// and masked-image channels, and the object region is masked out of both.
pub fn branch_intrinsics(
    base: &IntrinsicStack,
    object_mask: &MaskMap,
    shadow_mask: &MaskMap,
    shadow_gain: f64,
) -> Result<IntrinsicStack, ImageError> {
    let mut out = IntrinsicStack::new();
    for (kind, map) in base.iter() {
        let map = match kind {
            IntrinsicKind::Shading | IntrinsicKind::MaskedImage => {
                map.check_mask(object_mask)?;
                map.check_mask(shadow_mask)?;
                let c = map.channels();
                let data = map
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let p = i / c;
                        let shadowed = v * (1.0 - shadow_mask.data()[p] * (1.0 - shadow_gain));
                        shadowed * (1.0 - object_mask.data()[p])
                    })
                    .collect();
                PixelMap::new(map.width(), map.height(), c, data, map.space())?
            }
            _ => map.clone(),
        };
        out.insert(kind, map)?;
    }
    Ok(out)
}

/// Assembles branch inputs for a shadow mask.
pub fn make_branch_inputs(scene: &SceneBundle, shadow: &MaskMap, shadow_gain: f64) -> Result<BranchInputs, ImageError> {
    let guidance_composite = crate::imagecore::make_guidance_composite(
        &scene.background,
        &scene.object_albedo,
        &scene.object_mask,
        shadow,
        shadow_gain,
    )?;
    debug_assert_eq!(guidance_composite.space(), ColorSpace::Linear);
    Ok(BranchInputs {
        intrinsics: branch_intrinsics(&scene.intrinsics, &scene.object_mask, shadow, shadow_gain)?,
        shadow_mask: shadow.clone(),
        object_mask: scene.object_mask.clone(),
        guidance_composite,
    })
}
