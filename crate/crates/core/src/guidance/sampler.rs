use super::{
    blend_shadow_latents, make_branch_inputs, masked_guidance, Branch, BranchInputs, Codec, Denoiser, GuidanceConfig,
    NegativeMode, PredictionKind, SamplerError, SceneBundle,
};
use crate::imagecore::{dilate_mask, downsample_bilinear, LatentTensor, MaskMap, PixelMap};
use crate::scheduler::{v_from_eps_at, BetaSchedule, NoiseSchedule, VPrediction};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG substreams, split by purpose so that skipping one never shifts another.
const INIT_STREAM: u64 = 0;
const BLEND_STREAM: u64 = 1;

/// Per-step diagnostics of the guided pass.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StepTrace {
    pub step: usize,
    pub timestep: usize,
    pub alpha_bar: f64,
    /// Largest `beta * m` applied this step (0 when blending is inactive).
    pub blend_weight: f64,
    /// Max |v~ - v_pos| over the latent.
    pub guidance_delta: f64,
    pub latent_abs_max: f64,
}

/// Negative conditioning that was actually used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeUsed {
    Opposite,
    NoShadow,
    None,
}

#[derive(Debug, Clone)]
pub struct SamplerOutput {
    /// Decoded render with shadow guidance.
    pub image_with: PixelMap,
    /// Decoded render of the same seed without shadow guidance (empty shadow, gamma = 1).
    pub image_without: PixelMap,
    /// Final latents of the two passes, before decoding.
    pub latents_with: LatentTensor,
    pub latents_without: LatentTensor,
    pub trace: Vec<StepTrace>,
    pub negative: NegativeUsed,
}

struct Pass<'a> {
    positive: &'a BranchInputs,
    negative: Option<&'a BranchInputs>,
    blend_target: Option<(&'a LatentTensor, MaskMap)>,
    object_lat: &'a MaskMap,
    gamma: f64,
    beta: f64,
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn evaluate(
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    z: &LatentTensor,
    inputs: &BranchInputs,
    t: usize,
    branch: Branch,
) -> Result<VPrediction, super::BackendError> {
    let raw = denoiser.denoise(z, inputs, t, branch)?;
    z.same_shape(&raw)?;
    Ok(match denoiser.prediction_kind() {
        PredictionKind::V => VPrediction(raw),
        PredictionKind::Eps => v_from_eps_at(z, &raw, schedule.alpha_bar(t)?)?,
    })
}

fn run_pass(
    pass: &Pass<'_>,
    cfg: &GuidanceConfig,
    schedule: &NoiseSchedule,
    denoiser: &dyn Denoiser,
    shape: (usize, usize, usize),
) -> Result<(LatentTensor, Vec<StepTrace>), SamplerError> {
    let (c, h, w) = shape;
    let mut init_rng = rng_stream(cfg.seed, INIT_STREAM);
    let mut blend_rng = rng_stream(cfg.seed, BLEND_STREAM);
    let mut z = LatentTensor::randn(c, h, w, &mut init_rng);
    let mut trace = Vec::with_capacity(schedule.timesteps().len());

    for (step, (t, t_prev)) in schedule.step_pairs().enumerate() {
        let alpha_bar = schedule.alpha_bar(t)?;
        let (z_tilde, blend_weight) = match &pass.blend_target {
            Some((g_lat, mask)) => {
                let blended = blend_shadow_latents(&z, g_lat, mask, alpha_bar, pass.beta, &mut blend_rng)?;
                let wmax = mask.data().iter().fold(0.0f64, |a, &m| a.max(m)) * pass.beta;
                (blended, wmax)
            }
            None => (z, 0.0),
        };

        let wrap = |source| SamplerError::Denoiser {
            step,
            timestep: t,
            source,
        };
        let (v_pos, v_neg) = match pass.negative {
            None => (
                evaluate(denoiser, schedule, &z_tilde, pass.positive, t, Branch::Positive).map_err(wrap)?,
                None,
            ),
            Some(neg) if denoiser.concurrent_branches() => {
                let (p, n) = std::thread::scope(|s| {
                    let hn = s.spawn(|| evaluate(denoiser, schedule, &z_tilde, neg, t, Branch::Negative));
                    let p = evaluate(denoiser, schedule, &z_tilde, pass.positive, t, Branch::Positive);
                    (p, hn.join().expect("negative branch panicked"))
                });
                (p.map_err(wrap)?, Some(n.map_err(wrap)?))
            }
            Some(neg) => {
                let p = evaluate(denoiser, schedule, &z_tilde, pass.positive, t, Branch::Positive).map_err(wrap)?;
                let n = evaluate(denoiser, schedule, &z_tilde, neg, t, Branch::Negative).map_err(wrap)?;
                (p, Some(n))
            }
        };
        if !v_pos.tensor().is_finite() || v_neg.as_ref().is_some_and(|v| !v.tensor().is_finite()) {
            return Err(SamplerError::NonFinite { step, timestep: t });
        }

        let v = match &v_neg {
            Some(vn) => masked_guidance(&v_pos, vn, pass.object_lat, pass.gamma)?,
            None => v_pos.clone(),
        };
        let guidance_delta = v.tensor().max_abs_diff(v_pos.tensor());
        z = schedule.ddim_step(&z_tilde, &v, t, t_prev)?;
        if !z.is_finite() {
            return Err(SamplerError::NonFinite { step, timestep: t });
        }
        trace.push(StepTrace {
            step,
            timestep: t,
            alpha_bar,
            blend_weight,
            guidance_delta,
            latent_abs_max: z.data().iter().fold(0.0f64, |a, &v| a.max((v as f64).abs())),
        });
    }
    Ok((z, trace))
}

/// Runs the guided pass and the matching unguided pass from the same seed.
pub fn run_sampler(
    scene: &SceneBundle,
    cfg: &GuidanceConfig,
    denoiser: &dyn Denoiser,
    codec: &dyn Codec,
) -> Result<SamplerOutput, SamplerError> {
    cfg.validate()?;
    scene.validate()?;
    let schedule = NoiseSchedule::new(cfg.train_steps, cfg.steps, BetaSchedule::ScaledLinear)?;
    let (iw, ih) = (scene.background.width(), scene.background.height());
    let factor = codec.downscale().max(1);
    if iw % factor != 0 || ih % factor != 0 {
        return Err(SamplerError::Config(format!(
            "image {iw}x{ih} not divisible by codec downscale {factor}"
        )));
    }
    let (lw, lh) = (iw / factor, ih / factor);
    let shape = (codec.latent_channels(), lh, lw);

    let empty = MaskMap::zeros(iw, ih);
    let positive = make_branch_inputs(scene, &scene.positive_shadow, cfg.shadow_gain)?;
    let (negative, used) = match cfg.negative {
        NegativeMode::None => (None, NegativeUsed::None),
        NegativeMode::Opposite if scene.negative_shadow.is_some() => (
            Some(make_branch_inputs(
                scene,
                scene.negative_shadow.as_ref().unwrap(),
                cfg.shadow_gain,
            )?),
            NegativeUsed::Opposite,
        ),
        NegativeMode::Opposite | NegativeMode::NoShadow => (
            Some(make_branch_inputs(scene, &empty, cfg.shadow_gain)?),
            NegativeUsed::NoShadow,
        ),
    };

    let object_lat = downsample_bilinear(&scene.object_mask, lw, lh)?;
    let g_lat = codec
        .encode(&positive.guidance_composite)
        .map_err(SamplerError::Codec)?;
    if g_lat.shape() != shape {
        return Err(SamplerError::Config(format!(
            "codec produced latent {:?}, expected {shape:?}",
            g_lat.shape()
        )));
    }
    let blend_target = if cfg.blend && cfg.beta > 0.0 && !scene.positive_shadow.is_empty() {
        let dilated = dilate_mask(&scene.positive_shadow, cfg.dilation_kernel)?;
        Some((&g_lat, downsample_bilinear(&dilated, lw, lh)?))
    } else {
        None
    };

    let guided = Pass {
        positive: &positive,
        negative: negative.as_ref(),
        blend_target,
        object_lat: &object_lat,
        gamma: cfg.gamma,
        beta: cfg.beta,
    };
    let (z_with, trace) = run_pass(&guided, cfg, &schedule, denoiser, shape)?;

    let plain = make_branch_inputs(scene, &empty, cfg.shadow_gain)?;
    let unguided = Pass {
        positive: &plain,
        negative: None,
        blend_target: None,
        object_lat: &object_lat,
        gamma: 1.0,
        beta: 0.0,
    };
    let (z_without, _) = run_pass(&unguided, cfg, &schedule, denoiser, shape)?;

    Ok(SamplerOutput {
        image_with: codec.decode(&z_with).map_err(SamplerError::Codec)?,
        image_without: codec.decode(&z_without).map_err(SamplerError::Codec)?,
        latents_with: z_with,
        latents_without: z_without,
        trace,
        negative: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoisers::{IdentityCodec, TargetRule, ToyDenoiser};
    use crate::guidance::BackendError;
    use crate::imagecore::{ColorSpace, IntrinsicStack};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn scene(w: usize, h: usize) -> SceneBundle {
        let bg = PixelMap::from_fn(w, h, 3, ColorSpace::Linear, |x, y, c| {
            0.3 + 0.02 * ((x + 2 * y + c) % 10) as f64
        })
        .unwrap();
        let albedo = PixelMap::from_fn(w, h, 3, ColorSpace::Linear, |_, _, c| [0.6, 0.5, 0.4][c]).unwrap();
        let obj = MaskMap::from_fn(w, h, |x, y| {
            if (6..10).contains(&x) && (4..10).contains(&y) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let pos = MaskMap::from_fn(w, h, |x, y| {
            if (10..14).contains(&x) && (8..10).contains(&y) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let neg = MaskMap::from_fn(w, h, |x, y| {
            if (2..6).contains(&x) && (8..10).contains(&y) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        SceneBundle {
            background: bg,
            intrinsics: IntrinsicStack::new(),
            object_albedo: albedo,
            object_mask: obj,
            positive_shadow: pos,
            negative_shadow: Some(neg),
        }
    }

    fn cfg() -> GuidanceConfig {
        GuidanceConfig {
            steps: 10,
            dilation_kernel: 5,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_runs() {
        let s = scene(16, 12);
        let toy = ToyDenoiser::new(1000, TargetRule::ShadowCue { strength: 0.1 }).unwrap();
        let a = run_sampler(&s, &cfg(), &toy, &IdentityCodec::rgb()).unwrap();
        let b = run_sampler(&s, &cfg(), &toy, &IdentityCodec::rgb()).unwrap();
        assert_eq!(a.image_with, b.image_with);
        assert_eq!(a.image_without, b.image_without);
        assert_eq!(a.trace.len(), 10);
        assert_eq!(a.negative, NegativeUsed::Opposite);
    }

    #[test]
    fn opposite_falls_back_without_light() {
        let mut s = scene(16, 12);
        s.negative_shadow = None;
        let toy = ToyDenoiser::new(1000, TargetRule::Composite).unwrap();
        let out = run_sampler(&s, &cfg(), &toy, &IdentityCodec::rgb()).unwrap();
        assert_eq!(out.negative, NegativeUsed::NoShadow);
    }

    #[test]
    fn unity_gamma_matches_single_branch() {
        let s = scene(16, 12);
        let toy = ToyDenoiser::new(1000, TargetRule::ShadowCue { strength: 0.1 }).unwrap();
        let a = run_sampler(&s, &GuidanceConfig { gamma: 1.0, ..cfg() }, &toy, &IdentityCodec::rgb()).unwrap();
        let b = run_sampler(
            &s,
            &GuidanceConfig {
                negative: NegativeMode::None,
                ..cfg()
            },
            &toy,
            &IdentityCodec::rgb(),
        )
        .unwrap();
        assert_eq!(a.image_with, b.image_with);
    }

    #[test]
    fn locality_in_trace_free_region() {
        // with m_obj = 0 everywhere guidance never changes v
        let mut s = scene(16, 12);
        s.object_mask = MaskMap::zeros(16, 12);
        let toy = ToyDenoiser::new(1000, TargetRule::ShadowCue { strength: 0.1 }).unwrap();
        let out = run_sampler(&s, &cfg(), &toy, &IdentityCodec::rgb()).unwrap();
        assert!(out.trace.iter().all(|t| t.guidance_delta == 0.0));
    }

    struct Failing(AtomicUsize);

    impl Denoiser for Failing {
        fn denoise(
            &self,
            z: &LatentTensor,
            _: &BranchInputs,
            _: usize,
            _: Branch,
        ) -> Result<LatentTensor, BackendError> {
            if self.0.fetch_add(1, Ordering::SeqCst) >= 5 {
                return Err(BackendError::Other("boom".into()));
            }
            Ok(z.clone())
        }
    }

    struct Exploding;

    impl Denoiser for Exploding {
        fn denoise(
            &self,
            z: &LatentTensor,
            _: &BranchInputs,
            _: usize,
            _: Branch,
        ) -> Result<LatentTensor, BackendError> {
            Ok(z.map(|v| v * 1e30))
        }
    }

    #[test]
    fn failures_carry_step_index() {
        let s = scene(16, 12);
        let cfg = GuidanceConfig {
            negative: NegativeMode::None,
            ..cfg()
        };
        match run_sampler(&s, &cfg, &Failing(AtomicUsize::new(0)), &IdentityCodec::rgb()) {
            Err(SamplerError::Denoiser { step, .. }) => assert_eq!(step, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            run_sampler(&s, &cfg, &Exploding, &IdentityCodec::rgb()),
            Err(SamplerError::NonFinite { .. })
        ));
    }
}
