//! Writes a procedural scene and its `scene.json` manifest, ready for the
//! `spotlight` CLI.
//!
//! ```text
//! cargo run --example demo_scene -- target/demo [point|directional|scribble]
//! ```

use spotlight::manifest::ShadowSpec;
use spotlight::synthetic::{BoxScene, DemoScene};
use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().map(PathBuf::from).unwrap_or_else(|| "target/demo".into());
    let kind = args.next().unwrap_or_else(|| "point".into());

    let scene = DemoScene::from_geometry(
        BoxScene::standard(),
        ([0.6, 0.55, 0.45], [0.3, 0.35, 0.45]),
        [0.8, 0.2, 0.15],
    );
    let spec = match kind.as_str() {
        "point" => {
            let l = scene.point_light(-1.5);
            ShadowSpec::Point {
                x: l.x,
                y: l.y,
                h: l.h,
                radius: 2.0,
                samples: 16,
            }
        }
        "directional" => ShadowSpec::Directional {
            azimuth: 30.0,
            elevation: 40.0,
        },
        "scribble" => ShadowSpec::Scribble { path: PathBuf::new() },
        other => return Err(format!("unknown shadow kind {other:?}").into()),
    };
    let manifest = scene.write(&dir, spec)?;
    println!("{}", manifest.display());
    Ok(())
}
