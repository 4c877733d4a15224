//! Relights a procedural box scene end to end with the analytic toy
//! denoiser and writes the composite, matte and both sampler passes.
//!
//! ```text
//! cargo run --example relight_toy_scene [out_dir]
//! ```

use spotlight::denoisers::{IdentityCodec, TargetRule, ToyDenoiser};
use spotlight::guidance::GuidanceConfig;
use spotlight::imagecore::{color_transfer, ColorSpace, PixelMap};
use spotlight::io::{write_mask_png, write_pfm, write_png, BitDepth};
use spotlight::pipeline::{point_light_shadows, relight};
use spotlight::synthetic::{BoxScene, DemoScene};
use std::path::{Path, PathBuf};

fn save_srgb(path: &Path, img: &PixelMap) -> Result<(), Box<dyn std::error::Error>> {
    write_png(path, &color_transfer(img, ColorSpace::Srgb)?, BitDepth::Eight)?;
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| "target/example-out/relight".into());
    std::fs::create_dir_all(&out)?;

    let scene = DemoScene::from_geometry(
        BoxScene::standard(),
        ([0.55, 0.5, 0.4], [0.35, 0.4, 0.5]),
        [0.2, 0.5, 0.8],
    );
    let light = scene.point_light(-1.5);
    let shadows = point_light_shadows(&scene.mask(), &light, 16)?;
    let bundle = scene.bundle(shadows.positive.clone(), shadows.negative.clone());

    let cfg = GuidanceConfig {
        gamma: 3.0,
        ..Default::default()
    };
    let toy = ToyDenoiser::new(cfg.train_steps, TargetRule::ShadowCue { strength: 0.4 })?;
    let relit = relight(&bundle, &cfg, &toy, &IdentityCodec::rgb())?;

    save_srgb(&out.join("composite.png"), &relit.composite)?;
    save_srgb(&out.join("with.png"), &relit.sampler.image_with)?;
    save_srgb(&out.join("without.png"), &relit.sampler.image_without)?;
    write_pfm(&out.join("matte.pfm"), relit.matte.map())?;
    write_mask_png(&out.join("shadow.png"), &shadows.positive)?;

    // how much the painted shadow darkened the ground
    let (mut sum, mut n) = (0.0, 0);
    let m = relit.matte.map();
    for y in 0..m.height() {
        for x in 0..m.width() {
            if shadows.positive.get(x, y) > 0.9 && scene.mask().get(x, y) == 0.0 {
                sum += m.pixel(x, y).iter().sum::<f64>() / 3.0;
                n += 1;
            }
        }
    }
    println!("light at ({:.1}, {:.1}) h={:.1}", light.x, light.y, light.h);
    println!("{} umbra pixels, mean matte {:.3}", n, sum / n.max(1) as f64);
    println!("negative branch: {:?}", relit.sampler.negative);
    println!("wrote {}", out.display());
    Ok(())
}
