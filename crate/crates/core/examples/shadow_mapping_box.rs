//! Hard shadows of a floating box top for a ring of directional lights,
//! checked against the offset predicted by simple trigonometry.

use spotlight::io::write_mask_png;
use spotlight::pipeline::directional_shadows;
use spotlight::synthetic::BoxScene;
use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| "target/example-out/shadow_map".into());
    std::fs::create_dir_all(&out)?;

    let scene = BoxScene::standard();
    let (fx, fy) = scene.footprint_center();
    let elevation = 40.0;
    println!("{:>8} {:>10} {:>10} {:>8}", "azimuth", "measured", "predicted", "error");
    for azimuth in [0.0, 45.0, 90.0, 135.0, 180.0, -90.0] {
        let pair = directional_shadows(
            &scene.ground_depth(),
            &scene.object_depth(),
            &scene.mask(),
            scene.fov_deg,
            azimuth,
            elevation,
        )?;
        let (cx, cy) = pair.positive.centroid().ok_or("light missed the ground")?;
        let (px, py) = scene.predicted_offset(azimuth, elevation);
        let err = ((cx - fx - px).powi(2) + (cy - fy - py).powi(2)).sqrt();
        println!(
            "{azimuth:>8.0} ({:>4.1},{:>4.1}) ({:>4.1},{:>4.1}) {err:>8.2}",
            cx - fx,
            cy - fy,
            px,
            py
        );
        write_mask_png(&out.join(format!("az{azimuth:+04.0}.png")), &pair.positive)?;
        if let Some(neg) = &pair.negative {
            write_mask_png(&out.join(format!("az{azimuth:+04.0}_neg.png")), neg)?;
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}
