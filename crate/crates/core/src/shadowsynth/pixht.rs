use super::ShadowError;
use crate::imagecore::{close_mask, MaskMap};

/// Per-pixel object height above its ground foot, in pixels. Zero outside
/// the object.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelHeightMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl PixelHeightMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// Height from image row: with `y_max` the bottom-most object row,
/// `h = max(0, y_max - y - 2)`, so the lowest three rows touch the ground.
pub fn pixel_height_estimate(m_obj: &MaskMap) -> Result<PixelHeightMap, ShadowError> {
    let (w, h) = (m_obj.width(), m_obj.height());
    let y_max = (0..h)
        .rev()
        .find(|&y| (0..w).any(|x| m_obj.get(x, y) >= 0.5))
        .ok_or(ShadowError::EmptyMask)?;
    let mut data = vec![0.0; w * h];
    for y in 0..=y_max {
        for x in 0..w {
            if m_obj.get(x, y) >= 0.5 {
                data[y * w + x] = (y_max as f64 - y as f64 - 2.0).max(0.0);
            }
        }
    }
    Ok(PixelHeightMap {
        width: w,
        height: h,
        data,
    })
}

/// Mean column of the bottom-most object row, and that row.
pub fn object_bottom_center(m_obj: &MaskMap) -> Result<(f64, f64), ShadowError> {
    let (w, h) = (m_obj.width(), m_obj.height());
    let y_max = (0..h)
        .rev()
        .find(|&y| (0..w).any(|x| m_obj.get(x, y) >= 0.5))
        .ok_or(ShadowError::EmptyMask)?;
    let xs: Vec<f64> = (0..w)
        .filter(|&x| m_obj.get(x, y_max) >= 0.5)
        .map(|x| x as f64)
        .collect();
    Ok((xs.iter().sum::<f64>() / xs.len() as f64, y_max as f64))
}

/// Point light in the 2.5D model: ground foot `(x, y)` in pixels, height
/// `h` above it and a disk `radius` controlling softness.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PointLight2D {
    pub x: f64,
    pub y: f64,
    pub h: f64,
    #[serde(default)]
    pub radius: f64,
}

impl PointLight2D {
    pub fn validate(&self) -> Result<(), ShadowError> {
        let finite = [self.x, self.y, self.h, self.radius].iter().all(|v| v.is_finite());
        if !finite || self.h <= 0.0 || self.radius < 0.0 {
            return Err(ShadowError::InvalidLight(format!(
                "point light needs h > 0 and radius >= 0, got h = {} radius = {}",
                self.h, self.radius
            )));
        }
        Ok(())
    }
}

/// Reflects the light through the object's bottom center:
/// `x' = 2 x_o - x`, `y' = (2 y_o - (y - h)) + h`, `h' = h`, with `x'` and
/// `y'` clamped to the image.
pub fn negative_light_position(
    light: &PointLight2D,
    bottom_center: (f64, f64),
    width: usize,
    height: usize,
) -> PointLight2D {
    let (x_o, y_o) = bottom_center;
    let x = 2.0 * x_o - light.x;
    let y = (2.0 * y_o - (light.y - light.h)) + light.h;
    PointLight2D {
        x: x.clamp(0.0, width.saturating_sub(1) as f64),
        y: y.clamp(0.0, height.saturating_sub(1) as f64),
        h: light.h,
        radius: light.radius,
    }
}

/// Where an object point of height `h_p` above ground foot `foot` lands:
/// `S = P + (P - L) h_p / (h_L - h_p)`.
pub fn project_to_ground(foot: (f64, f64), h_p: f64, light_foot: (f64, f64), h_l: f64) -> (f64, f64) {
    let k = h_p / (h_l - h_p);
    (
        foot.0 + (foot.0 - light_foot.0) * k,
        foot.1 + (foot.1 - light_foot.1) * k,
    )
}

/// Soft shadow from a point light: each object pixel `(x, y)` with height
/// `h_p` stands on foot `(x, y + h_p)` and is projected away from the
/// light. Hard masks for `samples` light positions on a Vogel disk of the
/// light's radius are hole-filled with a 3x3 close and averaged.
pub fn soft_shadow_point_light(
    m_obj: &MaskMap,
    heights: &PixelHeightMap,
    light: &PointLight2D,
    samples: usize,
) -> Result<MaskMap, ShadowError> {
    light.validate()?;
    let (w, h) = (m_obj.width(), m_obj.height());
    if (heights.width(), heights.height()) != (w, h) {
        return Err(ShadowError::Geometry("height map and mask sizes differ".into()));
    }
    if samples == 0 {
        return Err(ShadowError::InvalidLight(
            "at least one light sample is required".into(),
        ));
    }
    let max_h = heights.max();
    if light.h <= max_h {
        return Err(ShadowError::InvalidLight(format!(
            "light height {} must exceed the tallest object pixel ({max_h})",
            light.h
        )));
    }
    let pixels: Vec<(f64, f64, f64)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| m_obj.get(x, y) >= 0.5)
        .map(|(x, y)| (x as f64, y as f64, heights.get(x, y)))
        .collect();
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut acc = vec![0.0; w * h];
    for k in 0..samples {
        let r = light.radius * ((k as f64 + 0.5) / samples as f64).sqrt();
        let theta = k as f64 * golden;
        let lf = (light.x + r * theta.cos(), light.y + r * theta.sin());
        let mut hard = vec![0.0; w * h];
        for &(x, y, hp) in &pixels {
            let (sx, sy) = project_to_ground((x, y + hp), hp, lf, light.h);
            let (sx, sy) = (sx.round(), sy.round());
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h {
                hard[sy as usize * w + sx as usize] = 1.0;
            }
        }
        let closed = close_mask(&MaskMap::new(w, h, hard)?, 3)?;
        for (a, v) in acc.iter_mut().zip(closed.data()) {
            *a += v;
        }
    }
    Ok(MaskMap::from_clamped(
        w,
        h,
        acc.into_iter().map(|v| v / samples as f64).collect(),
    )?)
}
