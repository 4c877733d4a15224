//! End-to-end glue: shadows from a manifest's light spec, the two-pass
//! sampler, the shadow matte and the background-preserving composite.

use crate::compositor::{preserve_background, shadow_matte, ShadowMatte, MATTE_EPS};
use crate::guidance::{run_sampler, Codec, Denoiser, GuidanceConfig, SamplerError, SamplerOutput, SceneBundle};
use crate::imagecore::{ImageError, MaskMap, PixelMap};
use crate::io::{read_mask_png, read_png};
use crate::manifest::{LoadedScene, ManifestError, SceneManifest, ShadowSpec};
use crate::shadowsynth::{
    backproject_depth, ingest_scribble, negative_light_position, object_bottom_center, pixel_height_estimate,
    shadow_map_directional, soft_shadow_point_light, DirectionalLight, GroundFrame, PointLight2D, ShadowError,
};

/// Positive shadow and, for parametric lights, the opposite light's shadow.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowPair {
    pub positive: MaskMap,
    pub negative: Option<MaskMap>,
}

impl ShadowPair {
    pub fn is_empty(&self) -> bool {
        self.positive.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("shadow synthesis failed: {0}")]
    Shadow(#[from] ShadowError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Hard shadows of the object layer on the background heightfield for a
/// light and for the same light turned 180 degrees.
pub fn directional_shadows(
    ground_depth: &PixelMap,
    object_depth: &PixelMap,
    object_mask: &MaskMap,
    fov_deg: f64,
    azimuth: f64,
    elevation: f64,
) -> Result<ShadowPair, ShadowError> {
    let ground = backproject_depth(ground_depth, fov_deg)?;
    let object = backproject_depth(object_depth, fov_deg)?;
    let frame = GroundFrame::fit(&ground)?;
    let light = DirectionalLight::from_angles(azimuth, elevation, &frame)?;
    Ok(ShadowPair {
        positive: shadow_map_directional(&ground, &object, object_mask, &light)?,
        negative: Some(shadow_map_directional(
            &ground,
            &object,
            object_mask,
            &light.flipped(&frame)?,
        )?),
    })
}

/// Soft pixel-height shadows for a light and for its reflection through the
/// object's bottom center.
pub fn point_light_shadows(
    object_mask: &MaskMap,
    light: &PointLight2D,
    samples: usize,
) -> Result<ShadowPair, ShadowError> {
    let heights = pixel_height_estimate(object_mask)?;
    let (w, h) = (object_mask.width(), object_mask.height());
    let opposite = negative_light_position(light, object_bottom_center(object_mask)?, w, h);
    Ok(ShadowPair {
        positive: soft_shadow_point_light(object_mask, &heights, light, samples)?,
        negative: Some(soft_shadow_point_light(object_mask, &heights, &opposite, samples)?),
    })
}

/// Shadows for whatever source the manifest names.
pub fn build_shadows(m: &SceneManifest, scene: &LoadedScene) -> Result<ShadowPair, PipelineError> {
    let dims = scene.dims();
    let check = |mask: &MaskMap, what: &str| -> Result<(), PipelineError> {
        if (mask.width(), mask.height()) != dims {
            return Err(ManifestError::Invalid(format!("{what} size differs from the background")).into());
        }
        Ok(())
    };
    Ok(match &m.shadow {
        ShadowSpec::Directional { azimuth, elevation } => {
            let missing = || ManifestError::Invalid("directional shadows need both depth layers".into());
            let ground = scene.background_depth.as_ref().ok_or_else(missing)?;
            let object = scene.object_depth.as_ref().ok_or_else(missing)?;
            directional_shadows(
                ground,
                object,
                &scene.object_mask,
                m.camera.fov_deg,
                *azimuth,
                *elevation,
            )?
        }
        ShadowSpec::Point {
            x,
            y,
            h,
            radius,
            samples,
        } => {
            let light = PointLight2D {
                x: *x,
                y: *y,
                h: *h,
                radius: *radius,
            };
            point_light_shadows(&scene.object_mask, &light, *samples)?
        }
        ShadowSpec::Scribble { path } => {
            let img = read_png(&m.resolve(path)).map_err(ManifestError::from)?;
            let positive = ingest_scribble(&img)?;
            check(&positive, "scribble")?;
            ShadowPair {
                positive,
                negative: None,
            }
        }
        ShadowSpec::Mask { path, negative } => {
            let positive = read_mask_png(&m.resolve(path)).map_err(ManifestError::from)?;
            check(&positive, "shadow mask")?;
            let negative = match negative {
                Some(p) => {
                    let n = read_mask_png(&m.resolve(p)).map_err(ManifestError::from)?;
                    check(&n, "negative shadow mask")?;
                    Some(n)
                }
                None => None,
            };
            ShadowPair { positive, negative }
        }
    })
}

pub fn scene_bundle(scene: &LoadedScene, shadows: &ShadowPair) -> SceneBundle {
    SceneBundle {
        background: scene.background.clone(),
        intrinsics: scene.intrinsics.clone(),
        object_albedo: scene.object_albedo.clone(),
        object_mask: scene.object_mask.clone(),
        positive_shadow: shadows.positive.clone(),
        negative_shadow: shadows.negative.clone(),
    }
}

/// A finished render, all images linear.
#[derive(Debug, Clone)]
pub struct Relit {
    pub composite: PixelMap,
    pub matte: ShadowMatte,
    pub sampler: SamplerOutput,
}

/// Sampler, shadow matte and composite over the untouched background.
pub fn relight(
    bundle: &SceneBundle,
    cfg: &GuidanceConfig,
    denoiser: &dyn Denoiser,
    codec: &dyn Codec,
) -> Result<Relit, PipelineError> {
    let sampler = run_sampler(bundle, cfg, denoiser, codec)?;
    let matte = shadow_matte(&sampler.image_with, &sampler.image_without, MATTE_EPS)?;
    let composite = preserve_background(&bundle.background, &sampler.image_with, &matte, &bundle.object_mask)?;
    Ok(Relit {
        composite,
        matte,
        sampler,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoisers::{IdentityCodec, TargetRule, ToyDenoiser};
    use crate::imagecore::{dilate_mask, ColorSpace, IntrinsicStack};

    fn box_mask(w: usize, h: usize) -> MaskMap {
        MaskMap::from_fn(w, h, |x, y| {
            ((12..20).contains(&x) && (10..22).contains(&y)) as u8 as f64
        })
        .unwrap()
    }

    #[test]
    fn point_light_pair_lands_on_both_sides() {
        let m = box_mask(32, 32);
        let light = PointLight2D {
            x: 4.0,
            y: 26.0,
            h: 40.0,
            radius: 0.0,
        };
        let pair = point_light_shadows(&m, &light, 1).unwrap();
        let (px, _) = pair.positive.centroid().unwrap();
        let (nx, _) = pair.negative.as_ref().unwrap().centroid().unwrap();
        assert!(px > 16.0 && nx < 16.0, "{px} {nx}");
    }

    #[test]
    fn composite_keeps_background_away_from_shadow() {
        let (w, h) = (32, 32);
        let bg = PixelMap::from_fn(w, h, 3, ColorSpace::Linear, |x, y, c| {
            0.2 + 0.01 * (x + 2 * y + c) as f64
        })
        .unwrap();
        let object_mask = box_mask(w, h);
        let pair = point_light_shadows(
            &object_mask,
            &PointLight2D {
                x: 2.0,
                y: 24.0,
                h: 30.0,
                radius: 2.0,
            },
            8,
        )
        .unwrap();
        let bundle = SceneBundle {
            background: bg.clone(),
            intrinsics: IntrinsicStack::new(),
            object_albedo: PixelMap::filled(w, h, 3, 0.7, ColorSpace::Linear),
            object_mask: object_mask.clone(),
            positive_shadow: pair.positive.clone(),
            negative_shadow: pair.negative,
        };
        let cfg = GuidanceConfig {
            steps: 20,
            ..Default::default()
        };
        let toy = ToyDenoiser::new(cfg.train_steps, TargetRule::Composite).unwrap();
        let out = relight(&bundle, &cfg, &toy, &IdentityCodec::rgb()).unwrap();
        let keep = dilate_mask(&object_mask.union(&pair.positive).unwrap(), cfg.dilation_kernel).unwrap();
        let mut darkened = 0;
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let (o, b) = (out.composite.get(x, y, c), bg.get(x, y, c));
                    if keep.get(x, y) == 0.0 {
                        assert!((o - b).abs() < 1e-3);
                    }
                    darkened += (pair.positive.get(x, y) > 0.9 && object_mask.get(x, y) == 0.0 && o < 0.7 * b) as usize;
                }
            }
        }
        assert!(darkened > 0);
        assert!(out.matte.map().data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
