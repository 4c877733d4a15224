//! Pixel-height shadows from a point light: one sample gives a hard edge,
//! more samples over the light's disk give a penumbra.

use spotlight::io::write_mask_png;
use spotlight::shadowsynth::{pixel_height_estimate, soft_shadow_point_light, PointLight2D};
use spotlight::synthetic::BoxScene;
use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| "target/example-out/pixht".into());
    std::fs::create_dir_all(&out)?;

    // a tall, thin object standing on the ground line y = 60
    let mask = BoxScene::new(96, 96, (44, 52, 30, 60)).mask();
    let heights = pixel_height_estimate(&mask)?;
    println!("tallest pixel height {:.0}", heights.max());

    for (radius, samples) in [(0.0, 1), (3.0, 4), (3.0, 16), (6.0, 64)] {
        let light = PointLight2D {
            x: 20.0,
            y: 70.0,
            h: 80.0,
            radius,
        };
        let shadow = soft_shadow_point_light(&mask, &heights, &light, samples)?;
        let total = shadow.data().iter().filter(|v| **v > 0.0).count();
        let soft = shadow.data().iter().filter(|v| **v > 0.0 && **v < 1.0).count();
        println!("radius {radius:>3} samples {samples:>3}: {total:>4} shadowed px, {soft:>4} in penumbra");
        write_mask_png(&out.join(format!("r{radius}_n{samples}.png")), &shadow)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
