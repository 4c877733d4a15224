//! Small procedural scenes with known geometry, used by the examples and
//! tests: an overhead camera above flat ground with a floating box top.

use crate::guidance::SceneBundle;
use crate::imagecore::{ColorSpace, IntrinsicKind, IntrinsicStack, MaskMap, PixelMap};
use crate::io::{write_mask_png, write_pfm, write_png, BitDepth, IoError};
use crate::manifest::{Camera, ObjectLayer, SceneManifest, ShadowSpec, MANIFEST_SCHEMA};
use crate::shadowsynth::{focal_from_fov, PointLight2D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Overhead camera looking straight down at ground depth `ground_z`; the
/// object is a box top at depth `top_z` covering `x0..x1, y0..y1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxScene {
    pub width: usize,
    pub height: usize,
    pub rect: (usize, usize, usize, usize),
    pub ground_z: f64,
    pub top_z: f64,
    pub fov_deg: f64,
}

impl BoxScene {
    pub fn new(width: usize, height: usize, rect: (usize, usize, usize, usize)) -> Self {
        Self {
            width,
            height,
            rect,
            ground_z: 10.0,
            top_z: 9.0,
            fov_deg: 50.0,
        }
    }

    /// 96x96 frame with a 12x12 px box top in the middle.
    pub fn standard() -> Self {
        Self::new(96, 96, (40, 52, 40, 52))
    }

    pub fn inside(&self, x: usize, y: usize) -> bool {
        let (x0, x1, y0, y1) = self.rect;
        (x0..x1).contains(&x) && (y0..y1).contains(&y)
    }

    pub fn mask(&self) -> MaskMap {
        MaskMap::from_fn(self.width, self.height, |x, y| self.inside(x, y) as u8 as f64).expect("non-empty frame")
    }

    pub fn ground_depth(&self) -> PixelMap {
        PixelMap::filled(self.width, self.height, 1, self.ground_z, ColorSpace::Raw)
    }

    /// Box-top depth inside the rectangle, 0 (no data) elsewhere.
    pub fn object_depth(&self) -> PixelMap {
        PixelMap::from_fn(self.width, self.height, 1, ColorSpace::Raw, |x, y, _| {
            if self.inside(x, y) {
                self.top_z
            } else {
                0.0
            }
        })
        .expect("non-empty frame")
    }

    fn focal(&self) -> f64 {
        focal_from_fov(self.width, self.fov_deg)
    }

    /// Image position of the box top dropped vertically onto the ground.
    pub fn footprint_center(&self) -> (f64, f64) {
        let (x0, x1, y0, y1) = self.rect;
        let (cx, cy) = ((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0);
        let mx = (x0 + x1 - 1) as f64 / 2.0;
        let my = (y0 + y1 - 1) as f64 / 2.0;
        let s = self.top_z / self.ground_z;
        (cx + (mx - cx) * s, cy + (my - cy) * s)
    }

    /// Pixel offset of the shadow from the footprint: a light at azimuth
    /// `az` (0 = behind the object, i.e. image-up; 90 = image-right) and
    /// elevation `el` throws the top's shadow `cot(el) * height` away from it.
    pub fn predicted_offset(&self, azimuth_deg: f64, elevation_deg: f64) -> (f64, f64) {
        let d = (self.ground_z - self.top_z) / elevation_deg.to_radians().tan() * self.focal() / self.ground_z;
        let az = azimuth_deg.to_radians();
        (-az.sin() * d, az.cos() * d)
    }
}

/// A colored box scene with background, albedo and intrinsics.
#[derive(Debug, Clone)]
pub struct DemoScene {
    pub geometry: BoxScene,
    pub background: PixelMap,
    pub albedo: PixelMap,
    pub intrinsics: IntrinsicStack,
}

fn gradient(w: usize, h: usize, a: [f64; 3], b: [f64; 3]) -> PixelMap {
    PixelMap::from_fn(w, h, 3, ColorSpace::Linear, |x, y, c| {
        let t = (x + y) as f64 / (w + h).saturating_sub(2).max(1) as f64;
        a[c] + (b[c] - a[c]) * t
    })
    .expect("non-empty frame")
}

impl DemoScene {
    pub fn from_geometry(geometry: BoxScene, bg: ([f64; 3], [f64; 3]), albedo: [f64; 3]) -> Self {
        let (w, h) = (geometry.width, geometry.height);
        let background = gradient(w, h, bg.0, bg.1);
        let albedo_map = PixelMap::from_fn(w, h, 3, ColorSpace::Linear, |_, _, c| albedo[c]).expect("frame");
        let normals =
            PixelMap::from_fn(w, h, 3, ColorSpace::Raw, |_, _, c| if c == 2 { -1.0 } else { 0.0 }).expect("frame");
        let intrinsics = IntrinsicStack::new()
            .with(IntrinsicKind::Albedo, background.clone())
            .and_then(|s| s.with(IntrinsicKind::Normals, normals))
            .and_then(|s| s.with(IntrinsicKind::Depth, geometry.ground_depth()))
            .and_then(|s| {
                s.with(
                    IntrinsicKind::Shading,
                    PixelMap::filled(w, h, 3, 1.0, ColorSpace::Linear),
                )
            })
            .expect("consistent sizes");
        Self {
            geometry,
            background,
            albedo: albedo_map,
            intrinsics,
        }
    }

    /// Random colors and a random box placement, reproducible from `seed`.
    pub fn random(seed: u64, width: usize, height: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bw = rng.random_range(width / 6..=width / 3).max(2);
        let bh = rng.random_range(height / 6..=height / 3).max(4);
        let x0 = rng.random_range(width / 4..=(width * 3 / 4).saturating_sub(bw).max(width / 4));
        let y0 = rng.random_range(height / 6..=(height / 2).saturating_sub(bh / 2).max(height / 6));
        let mut color = || [0.0; 3].map(|_| rng.random_range(0.15..0.85));
        let (a, b, alb) = (color(), color(), color());
        Self::from_geometry(BoxScene::new(width, height, (x0, x0 + bw, y0, y0 + bh)), (a, b), alb)
    }

    pub fn mask(&self) -> MaskMap {
        self.geometry.mask()
    }

    /// A point light off to one side, high enough for every object pixel.
    pub fn point_light(&self, side: f64) -> PointLight2D {
        let (x0, x1, y0, y1) = self.geometry.rect;
        let reach = (x1 - x0).max(y1 - y0) as f64;
        PointLight2D {
            x: ((x0 + x1) as f64 / 2.0 + side * reach).clamp(0.0, self.geometry.width as f64 - 1.0),
            y: (y1 as f64 + 2.0).min(self.geometry.height as f64 - 1.0),
            h: 2.0 * (y1 - y0) as f64,
            radius: 1.0,
        }
    }

    pub fn bundle(&self, positive: MaskMap, negative: Option<MaskMap>) -> SceneBundle {
        SceneBundle {
            background: self.background.clone(),
            intrinsics: self.intrinsics.clone(),
            object_albedo: self.albedo.clone(),
            object_mask: self.mask(),
            positive_shadow: positive,
            negative_shadow: negative,
        }
    }

    /// Dark ellipse below and right of the object, as a user would scribble it.
    pub fn scribble(&self) -> PixelMap {
        let (x0, x1, _, y1) = self.geometry.rect;
        let (cx, cy) = (x1 as f64 + 1.0, y1 as f64);
        let (rx, ry) = ((x1 - x0) as f64 * 0.6 + 1.0, 2.5);
        PixelMap::from_fn(
            self.geometry.width,
            self.geometry.height,
            3,
            ColorSpace::Srgb,
            |x, y, _| {
                let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
                if dx * dx + dy * dy <= 1.0 {
                    0.1
                } else {
                    1.0
                }
            },
        )
        .expect("frame")
    }

    /// Writes images, depth layers and `scene.json` into `dir`; returns the
    /// manifest path. A scribble spec gets `scribble.png` written; a mask spec
    /// is pointed at `shadow_mask.png`, which the caller provides (see
    /// [`write_empty_shadow`]). Their own paths are ignored.
    pub fn write(&self, dir: &Path, shadow: ShadowSpec) -> Result<PathBuf, IoError> {
        std::fs::create_dir_all(dir).map_err(|source| IoError::File {
            path: dir.to_path_buf(),
            source,
        })?;
        let p = |n: &str| dir.join(n);
        write_png(&p("background.png"), &self.background, BitDepth::Sixteen)?;
        write_png(&p("albedo.png"), &self.albedo, BitDepth::Sixteen)?;
        write_mask_png(&p("mask.png"), &self.mask())?;
        write_pfm(&p("background_depth.pfm"), &self.geometry.ground_depth())?;
        write_pfm(&p("object_depth.pfm"), &self.geometry.object_depth())?;
        write_png(
            &p("bg_albedo.png"),
            self.intrinsics.get(IntrinsicKind::Albedo).unwrap(),
            BitDepth::Sixteen,
        )?;
        write_pfm(&p("normals.pfm"), self.intrinsics.get(IntrinsicKind::Normals).unwrap())?;
        let shadow = match shadow {
            ShadowSpec::Scribble { .. } => {
                write_png(&p("scribble.png"), &self.scribble(), BitDepth::Eight)?;
                ShadowSpec::Scribble {
                    path: "scribble.png".into(),
                }
            }
            ShadowSpec::Mask { .. } => ShadowSpec::Mask {
                path: "shadow_mask.png".into(),
                negative: None,
            },
            other => other,
        };
        let manifest = SceneManifest {
            schema: MANIFEST_SCHEMA,
            background: "background.png".into(),
            background_depth: Some("background_depth.pfm".into()),
            intrinsics: BTreeMap::from([
                ("albedo".to_string(), PathBuf::from("bg_albedo.png")),
                ("normals".to_string(), PathBuf::from("normals.pfm")),
                ("depth".to_string(), PathBuf::from("background_depth.pfm")),
            ]),
            object: ObjectLayer {
                albedo: "albedo.png".into(),
                mask: "mask.png".into(),
                depth: Some("object_depth.pfm".into()),
            },
            shadow,
            camera: Camera {
                fov_deg: self.geometry.fov_deg,
            },
            guidance: Default::default(),
            toy: Default::default(),
            provenance: BTreeMap::from([("all".to_string(), "procedural box scene".to_string())]),
            base_dir: PathBuf::new(),
        };
        let path = p("scene.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|source| IoError::File {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}

/// Writes the all-zero shadow mask a `Mask` spec written by [`DemoScene::write`] points to.
pub fn write_empty_shadow(dir: &Path, width: usize, height: usize) -> Result<(), IoError> {
    write_mask_png(&dir.join("shadow_mask.png"), &MaskMap::zeros(width, height))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::load_scene;

    #[test]
    fn written_scene_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let s = DemoScene::random(3, 32, 32);
        let path = s
            .write(
                dir.path(),
                ShadowSpec::Directional {
                    azimuth: 0.0,
                    elevation: 45.0,
                },
            )
            .unwrap();
        let m = SceneManifest::load(&path).unwrap();
        let loaded = load_scene(&m).unwrap();
        assert_eq!(loaded.object_mask, s.mask());
        let err = loaded
            .background
            .data()
            .iter()
            .zip(s.background.data())
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn footprint_of_standard_box() {
        let (fx, fy) = BoxScene::standard().footprint_center();
        assert!((fx - 45.7).abs() < 1e-9 && (fy - 45.7).abs() < 1e-9);
    }
}
