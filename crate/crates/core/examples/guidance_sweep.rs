//! Sweeps the guidance scale and the shadow blend weight on one scene and
//! reports how dark the shadow gets and how far the object drifts from its
//! unguided render.
//!
//! The toy denoiser predicts its target exactly, so the end point does not
//! depend on the blend weight; it only moves the intermediate latents, shown
//! in the last column as the largest latent magnitude halfway through.

use spotlight::denoisers::{IdentityCodec, TargetRule, ToyDenoiser};
use spotlight::guidance::{run_sampler, GuidanceConfig};
use spotlight::pipeline::point_light_shadows;
use spotlight::synthetic::DemoScene;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = DemoScene::random(5, 48, 48);
    let shadows = point_light_shadows(&scene.mask(), &scene.point_light(1.0), 8)?;
    let bundle = scene.bundle(shadows.positive.clone(), shadows.negative.clone());
    let object = scene.mask();
    let toy = ToyDenoiser::new(1000, TargetRule::ShadowCue { strength: 0.5 })?;

    println!("| gamma | beta | shadow/ground | object change | mid-run max |");
    println!("|------:|-----:|--------------:|--------------:|------------:|");
    for gamma in [1.0, 3.0, 7.0] {
        for beta in [0.0, 0.05, 0.2] {
            let cfg = GuidanceConfig {
                gamma,
                beta,
                steps: 25,
                seed: 2,
                ..Default::default()
            };
            let out = run_sampler(&bundle, &cfg, &toy, &IdentityCodec::rgb())?;
            let (with, without) = (&out.image_with, &out.image_without);
            let (mut ratio, mut n, mut drift, mut m) = (0.0, 0, 0.0, 0);
            for y in 0..with.height() {
                for x in 0..with.width() {
                    let a = with.pixel(x, y).iter().sum::<f64>();
                    let b = without.pixel(x, y).iter().sum::<f64>();
                    if object.get(x, y) > 0.5 {
                        drift += (a - b).abs() / 3.0;
                        m += 1;
                    } else if shadows.positive.get(x, y) > 0.9 {
                        ratio += a / b.max(1e-4);
                        n += 1;
                    }
                }
            }
            let mid = out.trace[out.trace.len() / 2].latent_abs_max;
            println!(
                "| {gamma:>5} | {beta:>4} | {:>13.3} | {:>13.4} | {mid:>12.4} |",
                ratio / n.max(1) as f64,
                drift / m.max(1) as f64
            );
        }
    }
    Ok(())
}
