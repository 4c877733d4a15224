//! A hand-drawn shadow: dark strokes on white become the shadow mask, and
//! the render is guided with an empty-shadow negative branch.

use spotlight::denoisers::{IdentityCodec, TargetRule, ToyDenoiser};
use spotlight::guidance::{GuidanceConfig, NegativeMode};
use spotlight::imagecore::{color_transfer, ColorSpace};
use spotlight::io::{write_mask_png, write_png, BitDepth};
use spotlight::pipeline::relight;
use spotlight::shadowsynth::ingest_scribble;
use spotlight::synthetic::DemoScene;
use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| "target/example-out/scribble".into());
    std::fs::create_dir_all(&out)?;

    let scene = DemoScene::random(21, 64, 48);
    let strokes = scene.scribble();
    let mask = ingest_scribble(&strokes)?;
    println!("scribble covers {} px", mask.count_above(0.5));

    let cfg = GuidanceConfig {
        gamma: 5.0,
        negative: NegativeMode::NoShadow,
        steps: 30,
        ..Default::default()
    };
    let toy = ToyDenoiser::new(cfg.train_steps, TargetRule::Composite)?;
    let relit = relight(&scene.bundle(mask.clone(), None), &cfg, &toy, &IdentityCodec::rgb())?;

    write_png(&out.join("scribble.png"), &strokes, BitDepth::Eight)?;
    write_mask_png(&out.join("mask.png"), &mask)?;
    write_png(
        &out.join("composite.png"),
        &color_transfer(&relit.composite, ColorSpace::Srgb)?,
        BitDepth::Eight,
    )?;
    println!("negative branch: {:?}", relit.sampler.negative);
    println!("wrote {}", out.display());
    Ok(())
}
