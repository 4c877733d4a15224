use crate::guidance::{BackendError, Branch, BranchInputs, Denoiser};
use crate::imagecore::{downsample_bilinear, ImageError, LatentTensor, MaskMap, PixelMap};
use crate::scheduler::{v_from_at, BetaSchedule, NoiseSchedule, ScheduleError, VPrediction};

/// How the toy denoiser turns branch conditioning into its clean target `T`.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum TargetRule {
    /// `T` is the branch's guidance composite at latent resolution.
    #[default]
    Composite,
    /// Composite, with the object shaded darker on the side facing its
    /// shadow: `shade = 1 - strength * (1 + s) / 2`, where `s` in [-1, 1] is
    /// the object-pixel offset along the object-to-shadow direction. No
    /// shadow means no shading.
    ShadowCue { strength: f64 },
}

/// Analytic stand-in for a trained network: it returns the exact
/// v-prediction that moves every DDIM chain onto its branch target.
#[derive(Debug, Clone)]
pub struct ToyDenoiser {
    schedule: NoiseSchedule,
    rule: TargetRule,
}

impl ToyDenoiser {
    pub fn new(train_steps: usize, rule: TargetRule) -> Result<Self, ScheduleError> {
        Ok(Self {
            schedule: NoiseSchedule::new(train_steps, 1, BetaSchedule::ScaledLinear)?,
            rule,
        })
    }

    pub fn rule(&self) -> TargetRule {
        self.rule
    }

    /// Branch target `T` at `width x height`, planar.
    pub fn target(&self, inputs: &BranchInputs, width: usize, height: usize) -> Result<LatentTensor, ImageError> {
        let g = downsample_bilinear(&inputs.guidance_composite, width, height)?;
        let shaded = match self.rule {
            TargetRule::Composite => g,
            TargetRule::ShadowCue { strength } => {
                let obj = downsample_bilinear(&inputs.object_mask, width, height)?;
                let shw = downsample_bilinear(&inputs.shadow_mask, width, height)?;
                shade_by_shadow(&g, &obj, &shw, strength)?
            }
        };
        Ok(LatentTensor::from_pixel_map(&shaded))
    }

    pub fn denoise_v(&self, z: &LatentTensor, inputs: &BranchInputs, t: usize) -> Result<VPrediction, BackendError> {
        let target = self.target(inputs, z.width(), z.height())?;
        if target.shape() != z.shape() {
            return Err(ImageError::DimensionMismatch {
                expected: z.shape(),
                actual: target.shape(),
            }
            .into());
        }
        let alpha_bar = self.schedule.alpha_bar(t)?;
        let (a, s) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
        let eps_hat = z.zip_map(&target, |zv, tv| if s == 0.0 { 0.0 } else { (zv - a * tv) / s })?;
        Ok(v_from_at(&target, &eps_hat, alpha_bar)?)
    }
}

fn shade_by_shadow(g: &PixelMap, obj: &MaskMap, shw: &MaskMap, strength: f64) -> Result<PixelMap, ImageError> {
    let (Some(co), Some(cs)) = (obj.centroid(), shw.centroid()) else {
        return Ok(g.clone());
    };
    let (dx, dy) = (cs.0 - co.0, cs.1 - co.1);
    let len = (dx * dx + dy * dy).sqrt();
    if len < 1e-9 {
        return Ok(g.clone());
    }
    let (ux, uy) = (dx / len, dy / len);
    let proj = |x: usize, y: usize| (x as f64 - co.0) * ux + (y as f64 - co.1) * uy;
    let mut extent: f64 = 1.0;
    for y in 0..obj.height() {
        for x in 0..obj.width() {
            if obj.get(x, y) > 0.0 {
                extent = extent.max(proj(x, y).abs());
            }
        }
    }
    let c = g.channels();
    let w = g.width();
    let data = g
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let p = i / c;
            let m = obj.data()[p];
            if m == 0.0 {
                return v;
            }
            let s = (proj(p % w, p / w) / extent).clamp(-1.0, 1.0);
            let shade = 1.0 - strength * (1.0 + s) / 2.0;
            v * (1.0 - m * (1.0 - shade))
        })
        .collect();
    PixelMap::new(g.width(), g.height(), c, data, g.space())
}

impl Denoiser for ToyDenoiser {
    fn denoise(
        &self,
        latents: &LatentTensor,
        inputs: &BranchInputs,
        timestep: usize,
        _branch: Branch,
    ) -> Result<LatentTensor, BackendError> {
        Ok(self.denoise_v(latents, inputs, timestep)?.into_tensor())
    }

    fn concurrent_branches(&self) -> bool {
        true
    }
}
