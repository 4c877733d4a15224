//! Coarse shadow masks: depth-based shadow mapping for 3D insertion,
//! pixel-height soft shadows for 2D cutouts, and scribble ingestion.

mod pixht;
mod shadowmap;

pub use pixht::{
    negative_light_position, object_bottom_center, pixel_height_estimate, project_to_ground, soft_shadow_point_light,
    PixelHeightMap, PointLight2D,
};
pub use shadowmap::shadow_map_directional;

use crate::imagecore::{close_mask, ImageError, MaskMap, PixelMap};
use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShadowError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("object mask is empty")]
    EmptyMask,
    #[error("invalid light: {0}")]
    InvalidLight(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
}

/// Per-pixel camera-space points (x right, y down, z forward, meters).
#[derive(Debug, Clone, PartialEq)]
pub struct Heightfield {
    width: usize,
    height: usize,
    focal: f64,
    points: Vec<Vector3<f64>>,
    valid: MaskMap,
}

impl Heightfield {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        self.focal
    }

    pub fn point(&self, x: usize, y: usize) -> Vector3<f64> {
        self.points[y * self.width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid.get(x, y) > 0.5
    }

    pub fn valid(&self) -> &MaskMap {
        &self.valid
    }

    pub fn valid_points(&self) -> impl Iterator<Item = (usize, usize, Vector3<f64>)> + '_ {
        (0..self.height)
            .flat_map(move |y| (0..self.width).map(move |x| (x, y)))
            .filter(|&(x, y)| self.is_valid(x, y))
            .map(|(x, y)| (x, y, self.point(x, y)))
    }

    /// Median distance between horizontally adjacent valid points.
    pub fn median_spacing(&self) -> Option<f64> {
        let mut d: Vec<f64> = (0..self.height)
            .flat_map(|y| (1..self.width).map(move |x| (x, y)))
            .filter(|&(x, y)| self.is_valid(x, y) && self.is_valid(x - 1, y))
            .map(|(x, y)| (self.point(x, y) - self.point(x - 1, y)).norm())
            .collect();
        median(&mut d)
    }

    /// Median camera distance of the valid points.
    pub fn median_depth(&self) -> Option<f64> {
        let mut d: Vec<f64> = self.valid_points().map(|(_, _, p)| p.norm()).collect();
        median(&mut d)
    }

    /// Projects a camera-space point to continuous pixel coordinates.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        (p.z > 0.0).then(|| {
            (
                self.focal * p.x / p.z + self.width as f64 / 2.0 - 0.5,
                self.focal * p.y / p.z + self.height as f64 / 2.0 - 0.5,
            )
        })
    }
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[v.len() / 2])
}

/// Focal length in pixels for a horizontal field of view.
pub fn focal_from_fov(width: usize, fov_deg: f64) -> f64 {
    width as f64 / (2.0 * (fov_deg.to_radians() / 2.0).tan())
}

/// Pinhole backprojection `P = depth * K^-1 (x + 0.5, y + 0.5, 1)` with the
/// principal point at the image center. Nonpositive or non-finite depths
/// are marked invalid.
pub fn backproject_depth(depth: &PixelMap, fov_deg: f64) -> Result<Heightfield, ShadowError> {
    if depth.channels() != 1 {
        return Err(ImageError::BadChannels(depth.channels()).into());
    }
    if !(fov_deg > 0.0 && fov_deg < 180.0) {
        return Err(ShadowError::Geometry(format!(
            "field of view {fov_deg} outside (0, 180)"
        )));
    }
    let (w, h) = (depth.width(), depth.height());
    let f = focal_from_fov(w, fov_deg);
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let mut points = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let d = depth.get(x, y, 0);
            let ok = d.is_finite() && d > 0.0;
            let d = if ok { d } else { 0.0 };
            points.push(Vector3::new(
                d * (x as f64 + 0.5 - cx) / f,
                d * (y as f64 + 0.5 - cy) / f,
                d,
            ));
            valid.push(if ok { 1.0 } else { 0.0 });
        }
    }
    Ok(Heightfield {
        width: w,
        height: h,
        focal: f,
        points,
        valid: MaskMap::new(w, h, valid)?,
    })
}

/// Orientation of the ground plane in camera space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundFrame {
    /// Unit normal pointing away from the ground, toward the camera side.
    pub up: Vector3<f64>,
    /// Unit in-plane direction pointing away from the camera.
    pub forward: Vector3<f64>,
}

impl GroundFrame {
    /// Level camera: ground normal along image-up, forward along the optical axis.
    pub fn camera_level() -> Self {
        Self {
            up: Vector3::new(0.0, -1.0, 0.0),
            forward: Vector3::new(0.0, 0.0, 1.0),
        }
    }

    /// In-plane direction to the right of `forward`.
    pub fn right(&self) -> Vector3<f64> {
        self.forward.cross(&self.up)
    }

    /// Least-squares plane through the valid points. `forward` is the
    /// optical axis projected into the plane, or image-up for a camera
    /// looking straight down.
    pub fn fit(ground: &Heightfield) -> Result<Self, ShadowError> {
        let pts: Vec<Vector3<f64>> = ground.valid_points().map(|(_, _, p)| p).collect();
        if pts.len() < 3 {
            return Err(ShadowError::Geometry("fewer than three valid ground points".into()));
        }
        let mean = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
        let cov = pts.iter().fold(Matrix3::zeros(), |acc, p| {
            let d = p - mean;
            acc + d * d.transpose()
        });
        let eig = cov.symmetric_eigen();
        let (imin, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let mut up: Vector3<f64> = eig.eigenvectors.column(imin).into_owned().normalize();
        // camera at the origin sits on the "up" side
        if up.dot(&(-mean)) < 0.0 {
            up = -up;
        }
        let in_plane = |v: Vector3<f64>| v - up * up.dot(&v);
        let mut forward = in_plane(Vector3::new(0.0, 0.0, 1.0));
        if forward.norm() < 1e-6 {
            forward = in_plane(Vector3::new(0.0, -1.0, 0.0));
        }
        if forward.norm() < 1e-9 || !up.iter().all(|v| v.is_finite()) {
            return Err(ShadowError::Geometry("ground plane is degenerate".into()));
        }
        Ok(Self {
            up,
            forward: forward.normalize(),
        })
    }
}

/// Distant light. `direction` points from the scene toward the light.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalLight {
    pub direction: Vector3<f64>,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl DirectionalLight {
    /// Azimuth 0 places the light behind the object (shadow toward the
    /// camera); positive azimuth turns it toward the frame's right.
    /// Elevation is measured from the ground plane and must lie in (0, 90].
    pub fn from_angles(azimuth_deg: f64, elevation_deg: f64, frame: &GroundFrame) -> Result<Self, ShadowError> {
        if !azimuth_deg.is_finite() || !(elevation_deg > 0.0 && elevation_deg <= 90.0) {
            return Err(ShadowError::InvalidLight(format!(
                "elevation {elevation_deg} must be in (0, 90] with a finite azimuth"
            )));
        }
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        let horizontal = frame.forward * az.cos() + frame.right() * az.sin();
        let direction = (horizontal * el.cos() + frame.up * el.sin()).normalize();
        Ok(Self {
            direction,
            azimuth_deg,
            elevation_deg,
        })
    }

    /// The same light turned 180 degrees in azimuth.
    pub fn flipped(&self, frame: &GroundFrame) -> Result<Self, ShadowError> {
        Self::from_angles(self.azimuth_deg + 180.0, self.elevation_deg, frame)
    }
}

/// Dark strokes (luminance strictly below 0.5) become shadow, then a 3x3
/// close fills pinholes.
pub fn ingest_scribble(img: &PixelMap) -> Result<MaskMap, ShadowError> {
    let lum = img.luminance();
    let raw = MaskMap::new(
        img.width(),
        img.height(),
        lum.into_iter().map(|l| if l < 0.5 { 1.0 } else { 0.0 }).collect(),
    )?;
    Ok(close_mask(&raw, 3)?)
}
