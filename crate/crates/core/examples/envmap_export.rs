//! Environment maps for the five user-controlled light directions: ambient
//! color from the background, a spherical-gaussian sun per direction.

use spotlight::io::write_pfm;
use spotlight::lighting::{
    envmap_direction, latlong, user_controlled_directions, EnvMapParams, DEFAULT_K, DEFAULT_LAMBDA,
};
use spotlight::shadowsynth::GroundFrame;
use spotlight::synthetic::DemoScene;
use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| "target/example-out/envmaps".into());
    std::fs::create_dir_all(&out)?;

    let background = DemoScene::random(8, 64, 64).background;
    let frame = GroundFrame::camera_level();
    for (i, light) in user_controlled_directions(35.0, 5, &frame)?.iter().enumerate() {
        let v = envmap_direction(light, &frame);
        let params = EnvMapParams::from_background(&background, v, DEFAULT_K, DEFAULT_LAMBDA)?;
        let map = latlong(&params, 128, 64)?;
        let peak = map.data().iter().cloned().fold(0.0, f64::max);
        println!(
            "light {i}: v = ({:+.2}, {:+.2}, {:+.2}), ambient {:.3?}, peak {peak:.2}",
            v.x, v.y, v.z, params.c_amb
        );
        write_pfm(&out.join(format!("env_{i}.pfm")), &map)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
