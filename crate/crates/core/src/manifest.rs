//! Scene manifests (`"schema": 1` JSON), scene loading and the
//! reproducibility record written next to every render.

use crate::denoisers::TargetRule;
use crate::guidance::GuidanceConfig;
use crate::imagecore::{color_transfer, ColorSpace, ImageError, IntrinsicKind, IntrinsicStack, MaskMap, PixelMap};
use crate::io::{read_mask_png, read_pfm, read_png, read_scalar_map, IoError};
use crate::shadowsynth::PointLight2D;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MANIFEST_SCHEMA: u32 = 1;
pub const RECORD_SCHEMA: u32 = 1;
pub const DEFAULT_FOV_DEG: f64 = 50.0;
pub const DEFAULT_LIGHT_SAMPLES: usize = 16;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unsupported schema {0} (expected {MANIFEST_SCHEMA})")]
    Schema(u32),
    #[error("referenced file {0} does not exist")]
    Missing(PathBuf),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectLayer {
    /// Object albedo placed in the frame, same size as the background.
    pub albedo: PathBuf,
    pub mask: PathBuf,
    /// Object depth layer, needed by the 3D shadow mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<PathBuf>,
}

/// Where the positive shadow comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShadowSpec {
    /// Directional light in degrees; azimuth 0 puts the light behind the object.
    Directional {
        azimuth: f64,
        elevation: f64,
    },
    Point {
        x: f64,
        y: f64,
        h: f64,
        #[serde(default)]
        radius: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    Scribble {
        path: PathBuf,
    },
    Mask {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        negative: Option<PathBuf>,
    },
}

fn default_samples() -> usize {
    DEFAULT_LIGHT_SAMPLES
}

impl ShadowSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ShadowSpec::Directional { .. } => "directional",
            ShadowSpec::Point { .. } => "point",
            ShadowSpec::Scribble { .. } => "scribble",
            ShadowSpec::Mask { .. } => "mask",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Camera {
    pub fov_deg: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            fov_deg: DEFAULT_FOV_DEG,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub schema: u32,
    pub background: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_depth: Option<PathBuf>,
    /// Intrinsic maps keyed by kind (`albedo`, `normals`, `depth`, `shading`,
    /// `roughness`, `metallic`, `masked_image`).
    #[serde(default)]
    pub intrinsics: BTreeMap<String, PathBuf>,
    pub object: ObjectLayer,
    pub shadow: ShadowSpec,
    #[serde(default)]
    pub camera: Camera,
    /// Overrides of the sampler defaults; command-line flags win over these.
    #[serde(default)]
    pub guidance: GuidanceConfig,
    /// Target rule of the in-process toy denoiser.
    #[serde(default)]
    pub toy: TargetRule,
    /// Free text, e.g. which estimator produced each intrinsic map.
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl SceneManifest {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, ManifestError> {
        let mut m: SceneManifest = serde_json::from_str(text).map_err(|e| ManifestError::Parse {
            path: base_dir.to_path_buf(),
            message: e.to_string(),
        })?;
        m.base_dir = base_dir.to_path_buf();
        Ok(m)
    }

    /// Reads and validates a manifest; paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|e| ManifestError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self::from_json(&text, &base).map_err(|e| match e {
            ManifestError::Parse { message, .. } => ManifestError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Every referenced file, resolved, in a fixed order.
    pub fn input_paths(&self) -> Vec<PathBuf> {
        let mut out = vec![self.background.clone()];
        out.extend(self.background_depth.clone());
        out.extend(self.intrinsics.values().cloned());
        out.push(self.object.albedo.clone());
        out.push(self.object.mask.clone());
        out.extend(self.object.depth.clone());
        match &self.shadow {
            ShadowSpec::Scribble { path } => out.push(path.clone()),
            ShadowSpec::Mask { path, negative } => {
                out.push(path.clone());
                out.extend(negative.clone());
            }
            _ => {}
        }
        out.into_iter().map(|p| self.resolve(&p)).collect()
    }

    /// Structural checks that need no decoding.
    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.schema != MANIFEST_SCHEMA {
            return Err(ManifestError::Schema(self.schema));
        }
        let fov = self.camera.fov_deg;
        if !(fov > 0.0 && fov < 180.0) {
            return Err(ManifestError::Invalid(format!(
                "camera fov must be in (0, 180), got {fov}"
            )));
        }
        for name in self.intrinsics.keys() {
            if IntrinsicKind::parse(name).is_none() {
                return Err(ManifestError::Invalid(format!("unknown intrinsic map '{name}'")));
            }
        }
        self.guidance
            .validate()
            .map_err(|e| ManifestError::Invalid(format!("guidance: {e}")))?;
        match &self.shadow {
            ShadowSpec::Directional { azimuth, elevation } => {
                if !azimuth.is_finite() || !(*elevation > 0.0 && *elevation <= 90.0) {
                    return Err(ManifestError::Invalid(format!(
                        "directional light needs finite azimuth and elevation in (0, 90], got {azimuth}, {elevation}"
                    )));
                }
                if self.background_depth.is_none() || self.object.depth.is_none() {
                    return Err(ManifestError::Invalid(
                        "directional shadows need background_depth and object.depth".into(),
                    ));
                }
            }
            ShadowSpec::Point {
                x,
                y,
                h,
                radius,
                samples,
            } => {
                PointLight2D {
                    x: *x,
                    y: *y,
                    h: *h,
                    radius: *radius,
                }
                .validate()
                .map_err(|e| ManifestError::Invalid(e.to_string()))?;
                if *samples == 0 {
                    return Err(ManifestError::Invalid("point light needs samples >= 1".into()));
                }
            }
            _ => {}
        }
        for p in self.input_paths() {
            if !p.is_file() {
                return Err(ManifestError::Missing(p));
            }
        }
        Ok(())
    }
}

/// Decoded scene inputs, linear where they hold color.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub background: PixelMap,
    pub background_depth: Option<PixelMap>,
    pub intrinsics: IntrinsicStack,
    pub object_albedo: PixelMap,
    pub object_mask: MaskMap,
    pub object_depth: Option<PixelMap>,
}

impl LoadedScene {
    pub fn dims(&self) -> (usize, usize) {
        (self.background.width(), self.background.height())
    }
}

/// Color PNG as linear RGB.
pub fn read_color_linear(path: &Path) -> Result<PixelMap, IoError> {
    let img = read_png(path)?.to_rgb();
    Ok(match img.space() {
        ColorSpace::Linear => img,
        _ => color_transfer(&img.with_space(ColorSpace::Srgb)?, ColorSpace::Linear)?,
    })
}

fn is_pfm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm"))
}

/// Normals from PFM as stored, or from PNG remapped `[0, 1] -> [-1, 1]`.
fn read_normals(path: &Path) -> Result<PixelMap, IoError> {
    if is_pfm(path) {
        return Ok(read_pfm(path)?.to_rgb());
    }
    Ok(read_png(path)?.to_rgb().map(ColorSpace::Raw, |v| 2.0 * v - 1.0)?)
}

fn read_intrinsic(kind: IntrinsicKind, path: &Path) -> Result<PixelMap, IoError> {
    match kind {
        IntrinsicKind::Albedo | IntrinsicKind::Shading | IntrinsicKind::MaskedImage => read_color_linear(path),
        IntrinsicKind::Normals => read_normals(path),
        IntrinsicKind::Depth | IntrinsicKind::Roughness | IntrinsicKind::Metallic => read_scalar_map(path),
    }
}

fn check_size(what: &str, (w, h): (usize, usize), got: (usize, usize)) -> Result<(), ManifestError> {
    if got != (w, h) {
        return Err(ManifestError::Invalid(format!(
            "{what} is {}x{}, background is {w}x{h}",
            got.0, got.1
        )));
    }
    Ok(())
}

/// Decodes every image the manifest references and checks that they share
/// the background's size.
pub fn load_scene(m: &SceneManifest) -> Result<LoadedScene, ManifestError> {
    let background = read_color_linear(&m.resolve(&m.background))?;
    let dims = (background.width(), background.height());
    let background_depth = match &m.background_depth {
        Some(p) => Some(read_scalar_map(&m.resolve(p))?),
        None => None,
    };
    let mut intrinsics = IntrinsicStack::new();
    for (name, p) in &m.intrinsics {
        let kind = IntrinsicKind::parse(name).ok_or_else(|| ManifestError::Invalid(format!("unknown map {name}")))?;
        let map = read_intrinsic(kind, &m.resolve(p))?;
        check_size(name, dims, (map.width(), map.height()))?;
        intrinsics.insert(kind, map)?;
    }
    let object_albedo = read_color_linear(&m.resolve(&m.object.albedo))?;
    let object_mask = read_mask_png(&m.resolve(&m.object.mask))?;
    let object_depth = match &m.object.depth {
        Some(p) => Some(read_scalar_map(&m.resolve(p))?),
        None => None,
    };
    check_size("object albedo", dims, (object_albedo.width(), object_albedo.height()))?;
    check_size("object mask", dims, (object_mask.width(), object_mask.height()))?;
    for (what, d) in [("background depth", &background_depth), ("object depth", &object_depth)] {
        if let Some(d) = d {
            check_size(what, dims, (d.width(), d.height()))?;
        }
    }
    if object_mask.count_above(0.5) == 0 {
        return Err(ManifestError::Invalid("object mask is empty".into()));
    }
    Ok(LoadedScene {
        background,
        background_depth,
        intrinsics,
        object_albedo,
        object_mask,
        object_depth,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, IoError> {
    let bytes = std::fs::read(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(sha256_hex(&bytes))
}

/// Which backend produced a render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DenoiserChoice {
    Toy { rule: TargetRule },
    Sidecar { addr: String },
}

/// Everything needed to re-run a render and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRecord {
    pub schema: u32,
    pub tool_version: String,
    pub manifest: PathBuf,
    pub manifest_sha256: String,
    /// Resolved input path -> content hash.
    pub inputs: BTreeMap<String, String>,
    pub config: GuidanceConfig,
    pub denoiser: DenoiserChoice,
    /// Output file name -> content hash.
    pub outputs: BTreeMap<String, String>,
}

impl RenderRecord {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|e| ManifestError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let r: RenderRecord = serde_json::from_str(&text).map_err(|e| ManifestError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if r.schema != RECORD_SCHEMA {
            return Err(ManifestError::Schema(r.schema));
        }
        Ok(r)
    }

    /// Input files whose content no longer matches the record.
    pub fn changed_inputs(&self) -> Vec<String> {
        self.inputs
            .iter()
            .filter(|(p, h)| sha256_file(Path::new(p)).ok().as_ref() != Some(*h))
            .map(|(p, _)| p.clone())
            .collect()
    }
}

pub fn hash_inputs(m: &SceneManifest) -> Result<BTreeMap<String, String>, IoError> {
    m.input_paths()
        .into_iter()
        .map(|p| Ok((p.display().to_string(), sha256_file(&p)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{write_mask_png, write_png, BitDepth};

    fn scene_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let bg = PixelMap::filled(8, 6, 3, 0.5, ColorSpace::Srgb);
        write_png(&dir.path().join("bg.png"), &bg, BitDepth::Eight).unwrap();
        write_png(&dir.path().join("obj.png"), &bg, BitDepth::Eight).unwrap();
        let m = MaskMap::from_fn(8, 6, |x, y| ((2..5).contains(&x) && (1..4).contains(&y)) as u8 as f64).unwrap();
        write_mask_png(&dir.path().join("mask.png"), &m).unwrap();
        dir
    }

    const BASE: &str = r#"{"schema": 1, "background": "bg.png",
        "object": {"albedo": "obj.png", "mask": "mask.png"},
        "shadow": {"type": "point", "x": 1, "y": 5, "h": 20}"#;

    #[test]
    fn parses_and_loads() {
        let dir = scene_dir();
        let text = format!("{BASE}, \"guidance\": {{\"gamma\": 7}}, \"provenance\": {{\"albedo\": \"hand\"}}}}");
        std::fs::write(dir.path().join("scene.json"), text).unwrap();
        let m = SceneManifest::load(&dir.path().join("scene.json")).unwrap();
        assert_eq!(m.guidance.gamma, 7.0);
        assert_eq!(m.guidance.beta, 0.05);
        assert_eq!(m.camera.fov_deg, 50.0);
        assert!(matches!(m.shadow, ShadowSpec::Point { samples: 16, radius, .. } if radius == 0.0));
        let s = load_scene(&m).unwrap();
        assert_eq!(s.dims(), (8, 6));
        assert_eq!(s.background.space(), ColorSpace::Linear);
        assert_eq!(s.object_mask.count_above(0.5), 9);
        assert_eq!(hash_inputs(&m).unwrap().len(), 3);
    }

    #[test]
    fn rejects_bad_manifests() {
        let dir = scene_dir();
        let load = |text: String| SceneManifest::from_json(&text, dir.path()).and_then(|m| m.validate());
        assert!(matches!(
            load(format!("{BASE}}}").replace("\"schema\": 1", "\"schema\": 2")),
            Err(ManifestError::Schema(2))
        ));
        assert!(matches!(
            load(format!("{BASE}}}").replace("bg.png", "nope.png")),
            Err(ManifestError::Missing(_))
        ));
        assert!(matches!(
            load(format!("{BASE}, \"extra\": 1}}")),
            Err(ManifestError::Parse { .. })
        ));
        assert!(matches!(
            load(format!("{BASE}, \"intrinsics\": {{\"glow\": \"bg.png\"}}}}")),
            Err(ManifestError::Invalid(_))
        ));
        let directional = format!("{BASE}}}").replace(
            r#"{"type": "point", "x": 1, "y": 5, "h": 20}"#,
            r#"{"type": "directional", "azimuth": 0, "elevation": 45}"#,
        );
        assert!(matches!(load(directional), Err(ManifestError::Invalid(_))));
        assert!(matches!(
            load(format!("{BASE}, \"guidance\": {{\"beta\": 2}}}}")),
            Err(ManifestError::Invalid(_))
        ));
    }

    #[test]
    fn record_round_trip() {
        let r = RenderRecord {
            schema: RECORD_SCHEMA,
            tool_version: "0".into(),
            manifest: "scene.json".into(),
            manifest_sha256: sha256_hex(b""),
            inputs: BTreeMap::from([("/nonexistent".to_string(), sha256_hex(b"x"))]),
            config: GuidanceConfig::default(),
            denoiser: DenoiserChoice::Toy {
                rule: TargetRule::Composite,
            },
            outputs: BTreeMap::new(),
        };
        assert_eq!(
            r.manifest_sha256,
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        std::fs::write(&p, r.to_json()).unwrap();
        assert_eq!(RenderRecord::load(&p).unwrap(), r);
        assert_eq!(r.changed_inputs(), vec!["/nonexistent".to_string()]);
    }
}
