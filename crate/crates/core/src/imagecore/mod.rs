//! Image, mask and latent value types plus the small set of pixel operations
//! the sampler needs: sRGB transfer, binary dilation, area/bilinear
//! resampling and the shadow-guidance composite.

mod color;
mod composite;
mod morph;
mod resample;

pub use color::{color_transfer, linear_to_srgb, srgb_to_linear};
pub use composite::make_guidance_composite;
pub use morph::{binarize, close_mask, dilate_mask, erode_mask};
pub use resample::{downsample_bilinear, Resample};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize, usize),
        actual: (usize, usize, usize),
    },
    #[error("data length {len} does not match {width}x{height}x{channels}")]
    BadLength {
        len: usize,
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("unsupported channel count {0}")]
    BadChannels(usize),
    #[error("value {value} at index {index} violates the {what} range")]
    OutOfRange {
        index: usize,
        value: f64,
        what: &'static str,
    },
    #[error("kernel size must be odd and at least 1, got {0}")]
    BadKernel(usize),
    #[error("target size must be nonzero, got {0}x{1}")]
    ZeroSize(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Color encoding of a [`PixelMap`].
///
/// `Raw` tags non-radiometric data such as normals or depth; it is never
/// passed through a transfer curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    Linear,
    Srgb,
    Raw,
}

/// Row-major, channel-interleaved image.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMap {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    space: ColorSpace,
}

impl PixelMap {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
        space: ColorSpace,
    ) -> Result<Self, ImageError> {
        if !(1..=4).contains(&channels) || channels == 2 {
            return Err(ImageError::BadChannels(channels));
        }
        if data.len() != width * height * channels {
            return Err(ImageError::BadLength {
                len: data.len(),
                width,
                height,
                channels,
            });
        }
        for (index, &value) in data.iter().enumerate() {
            let ok = match space {
                ColorSpace::Linear => value.is_finite() && value >= 0.0,
                ColorSpace::Srgb => (0.0..=1.0).contains(&value),
                ColorSpace::Raw => value.is_finite(),
            };
            if !ok {
                return Err(ImageError::OutOfRange {
                    index,
                    value,
                    what: match space {
                        ColorSpace::Linear => "non-negative linear",
                        ColorSpace::Srgb => "sRGB [0,1]",
                        ColorSpace::Raw => "finite",
                    },
                });
            }
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            space,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64, space: ColorSpace) -> Self {
        Self::new(width, height, channels, vec![value; width * height * channels], space)
            .expect("filled map with invalid value")
    }

    /// Builds a map by evaluating `f(x, y, c)` for every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        space: ColorSpace,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data, space)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Applies `f` to every sample, re-validating the result against `space`.
    pub fn map(&self, space: ColorSpace, f: impl Fn(f64) -> f64) -> Result<Self, ImageError> {
        Self::new(
            self.width,
            self.height,
            self.channels,
            self.data.iter().map(|&v| f(v)).collect(),
            space,
        )
    }

    /// Multiplies every sample by `s` (must keep the map valid for its space).
    pub fn scaled(&self, s: f64) -> Result<Self, ImageError> {
        self.map(self.space, |v| v * s)
    }

    pub fn same_dims(&self, other: &PixelMap) -> Result<(), ImageError> {
        if self.dims() != other.dims() {
            return Err(ImageError::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    pub fn check_mask(&self, mask: &MaskMap) -> Result<(), ImageError> {
        if (self.width, self.height) != (mask.width(), mask.height()) {
            return Err(ImageError::DimensionMismatch {
                expected: (self.width, self.height, 1),
                actual: (mask.width(), mask.height(), 1),
            });
        }
        Ok(())
    }

    /// Retags the map without touching the data.
    pub fn with_space(self, space: ColorSpace) -> Result<Self, ImageError> {
        Self::new(self.width, self.height, self.channels, self.data, space)
    }

    /// Single-channel copy of channel `c`.
    pub fn channel(&self, c: usize) -> PixelMap {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        PixelMap {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
            space: self.space,
        }
    }

    /// Rec. 709 luminance (or the single channel of a gray map).
    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .chunks_exact(self.channels)
            .map(|p| match self.channels {
                1 => p[0],
                _ => 0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2],
            })
            .collect()
    }

    /// Drops or adds channels to get an RGB map (gray is replicated, alpha dropped).
    pub fn to_rgb(&self) -> PixelMap {
        let data = self
            .data
            .chunks_exact(self.channels)
            .flat_map(|p| match self.channels {
                1 => [p[0], p[0], p[0]],
                _ => [p[0], p[1], p[2]],
            })
            .collect();
        PixelMap {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
            space: self.space,
        }
    }
}

/// Single-channel map with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl MaskMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if data.len() != width * height {
            return Err(ImageError::BadLength {
                len: data.len(),
                width,
                height,
                channels: 1,
            });
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(ImageError::OutOfRange {
                index,
                value,
                what: "mask [0,1]",
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Clamps arbitrary values into `[0, 1]`; NaN becomes 0.
    pub fn from_clamped(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        Self::new(
            width,
            height,
            data.into_iter()
                .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
                .collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn count_above(&self, threshold: f64) -> usize {
        self.data.iter().filter(|&&v| v > threshold).count()
    }

    pub fn same_dims(&self, other: &MaskMap) -> Result<(), ImageError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(ImageError::DimensionMismatch {
                expected: (self.width, self.height, 1),
                actual: (other.width, other.height, 1),
            });
        }
        Ok(())
    }

    /// Pointwise maximum (union) of two masks.
    pub fn union(&self, other: &MaskMap) -> Result<MaskMap, ImageError> {
        self.same_dims(other)?;
        Ok(MaskMap {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a.max(*b)).collect(),
        })
    }

    /// Weighted centroid `(x, y)` in pixel-center coordinates, `None` for an empty mask.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                let w = self.get(x, y);
                sx += w * x as f64;
                sy += w * y as f64;
                sw += w;
            }
        }
        (sw > 0.0).then(|| (sx / sw, sy / sw))
    }

    /// View of the mask as a one-channel raw pixel map.
    pub fn to_pixel_map(&self) -> PixelMap {
        PixelMap {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.data.clone(),
            space: ColorSpace::Raw,
        }
    }
}

/// Channel-planar `C x H x W` tensor in the diffusion latent domain.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl LatentTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        if data.len() != channels * height * width {
            return Err(ImageError::BadLength {
                len: data.len(),
                width,
                height,
                channels,
            });
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(ImageError::OutOfRange {
                index,
                value: value as f64,
                what: "finite",
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    /// Standard-normal tensor drawn from `rng` in row-major order.
    pub fn randn<R: rand::Rng + ?Sized>(channels: usize, height: usize, width: usize, rng: &mut R) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let data = (0..channels * height * width)
            .map(|_| {
                let v: f64 = StandardNormal.sample(rng);
                v as f32
            })
            .collect();
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &LatentTensor) -> Result<(), ImageError> {
        if self.shape() != other.shape() {
            return Err(ImageError::DimensionMismatch {
                expected: self.shape(),
                actual: other.shape(),
            });
        }
        Ok(())
    }

    /// Elementwise combination in f64, stored back as f32. Skips the
    /// finiteness check; callers validate whole tensors where it matters.
    pub fn zip_map(&self, other: &LatentTensor, f: impl Fn(f64, f64) -> f64) -> Result<LatentTensor, ImageError> {
        self.same_shape(other)?;
        Ok(LatentTensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a as f64, b as f64) as f32)
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> LatentTensor {
        LatentTensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&a| f(a as f64) as f32).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &LatentTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .fold(0.0, f64::max)
    }

    /// Planar copy of an interleaved pixel map.
    pub fn from_pixel_map(img: &PixelMap) -> LatentTensor {
        let (w, h, c) = img.dims();
        let mut data = vec![0f32; w * h * c];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    data[(ch * h + y) * w + x] = img.get(x, y, ch) as f32;
                }
            }
        }
        LatentTensor {
            channels: c,
            height: h,
            width: w,
            data,
        }
    }

    /// Interleaved pixel map from a planar tensor. Negative values are
    /// clamped to zero when the target space is linear.
    pub fn to_pixel_map(&self, space: ColorSpace) -> Result<PixelMap, ImageError> {
        let (c, h, w) = self.shape();
        let mut data = vec![0f64; w * h * c];
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let v = self.data[(ch * h + y) * w + x] as f64;
                    data[(y * w + x) * c + ch] = match space {
                        ColorSpace::Linear => v.max(0.0),
                        ColorSpace::Srgb => v.clamp(0.0, 1.0),
                        ColorSpace::Raw => v,
                    };
                }
            }
        }
        PixelMap::new(w, h, c, data, space)
    }
}

/// Names accepted in an [`IntrinsicStack`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntrinsicKind {
    Albedo,
    Normals,
    Depth,
    Shading,
    Roughness,
    Metallic,
    MaskedImage,
}

impl IntrinsicKind {
    pub const ALL: [IntrinsicKind; 7] = [
        IntrinsicKind::Albedo,
        IntrinsicKind::Normals,
        IntrinsicKind::Depth,
        IntrinsicKind::Shading,
        IntrinsicKind::Roughness,
        IntrinsicKind::Metallic,
        IntrinsicKind::MaskedImage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IntrinsicKind::Albedo => "albedo",
            IntrinsicKind::Normals => "normals",
            IntrinsicKind::Depth => "depth",
            IntrinsicKind::Shading => "shading",
            IntrinsicKind::Roughness => "roughness",
            IntrinsicKind::Metallic => "metallic",
            IntrinsicKind::MaskedImage => "masked_image",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == name)
    }
}

/// Ordered set of intrinsic maps conditioning the renderer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntrinsicStack {
    maps: Vec<(IntrinsicKind, PixelMap)>,
}

impl IntrinsicStack {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a map, enforcing shared dimensions and the
    /// normals/depth value ranges.
    pub fn insert(&mut self, kind: IntrinsicKind, map: PixelMap) -> Result<(), ImageError> {
        if let Some((_, first)) = self.maps.iter().find(|(k, _)| *k != kind) {
            if (first.width(), first.height()) != (map.width(), map.height()) {
                return Err(ImageError::DimensionMismatch {
                    expected: (first.width(), first.height(), map.channels()),
                    actual: map.dims(),
                });
            }
        }
        let check = |lo: f64, hi: f64, what| {
            map.data()
                .iter()
                .enumerate()
                .find(|(_, v)| !(lo..=hi).contains(*v))
                .map_or(Ok(()), |(index, &value)| {
                    Err(ImageError::OutOfRange { index, value, what })
                })
        };
        match kind {
            IntrinsicKind::Normals => check(-1.0, 1.0, "normals [-1,1]")?,
            IntrinsicKind::Depth => check(0.0, f64::INFINITY, "depth >= 0")?,
            _ => {}
        }
        match self.maps.iter_mut().find(|(k, _)| *k == kind) {
            Some(slot) => slot.1 = map,
            None => self.maps.push((kind, map)),
        }
        Ok(())
    }

    pub fn with(mut self, kind: IntrinsicKind, map: PixelMap) -> Result<Self, ImageError> {
        self.insert(kind, map)?;
        Ok(self)
    }

    pub fn get(&self, kind: IntrinsicKind) -> Option<&PixelMap> {
        self.maps.iter().find(|(k, _)| *k == kind).map(|(_, m)| m)
    }

    pub fn iter(&self) -> impl Iterator<Item = (IntrinsicKind, &PixelMap)> {
        self.maps.iter().map(|(k, m)| (*k, m))
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.maps.first().map(|(_, m)| (m.width(), m.height()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_map_rejects_bad_data() {
        assert!(matches!(
            PixelMap::new(2, 2, 3, vec![0.0; 11], ColorSpace::Linear),
            Err(ImageError::BadLength { .. })
        ));
        assert!(PixelMap::new(1, 1, 1, vec![-0.1], ColorSpace::Linear).is_err());
        assert!(PixelMap::new(1, 1, 1, vec![1.1], ColorSpace::Srgb).is_err());
        assert!(PixelMap::new(1, 1, 1, vec![-0.7], ColorSpace::Raw).is_ok());
        assert!(PixelMap::new(1, 1, 2, vec![0.0; 2], ColorSpace::Raw).is_err());
    }

    #[test]
    fn mask_range_is_enforced() {
        assert!(MaskMap::new(1, 2, vec![0.0, 1.01]).is_err());
        let m = MaskMap::from_clamped(1, 3, vec![-1.0, 0.5, f64::NAN]).unwrap();
        assert_eq!(m.data(), &[0.0, 0.5, 0.0]);
    }

    #[test]
    fn latent_rejects_non_finite() {
        assert!(LatentTensor::new(1, 1, 2, vec![0.0, f32::NAN]).is_err());
        assert!(LatentTensor::new(1, 1, 2, vec![0.0, f32::INFINITY]).is_err());
    }

    #[test]
    fn pixel_latent_round_trip() {
        let img = PixelMap::from_fn(3, 2, 3, ColorSpace::Linear, |x, y, c| {
            (x + 10 * y + 100 * c) as f64 * 0.25
        })
        .unwrap();
        let lat = LatentTensor::from_pixel_map(&img);
        assert_eq!(lat.shape(), (3, 2, 3));
        // planar layout: channel 1, row 1, col 2
        assert_eq!(lat.data()[(2 + 1) * 3 + 2], (2 + 10 + 100) as f32 * 0.25);
        assert_eq!(lat.to_pixel_map(ColorSpace::Linear).unwrap(), img);
    }

    #[test]
    fn intrinsic_stack_validates() {
        let n = PixelMap::filled(4, 4, 3, -0.5, ColorSpace::Raw);
        let mut stack = IntrinsicStack::new().with(IntrinsicKind::Normals, n).unwrap();
        let bad_depth = PixelMap::filled(4, 4, 1, -1.0, ColorSpace::Raw);
        assert!(stack.insert(IntrinsicKind::Depth, bad_depth).is_err());
        let wrong_size = PixelMap::filled(5, 4, 3, 0.5, ColorSpace::Linear);
        assert!(stack.insert(IntrinsicKind::Albedo, wrong_size).is_err());
        let bad_normals = PixelMap::filled(4, 4, 3, 1.5, ColorSpace::Raw);
        assert!(stack.insert(IntrinsicKind::Normals, bad_normals).is_err());
        assert_eq!(IntrinsicKind::parse("masked_image"), Some(IntrinsicKind::MaskedImage));
    }

    #[test]
    fn centroid_of_block() {
        let m = MaskMap::from_fn(10, 10, |x, y| {
            if (2..5).contains(&x) && (6..8).contains(&y) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let (cx, cy) = m.centroid().unwrap();
        assert!((cx - 3.0).abs() < 1e-12 && (cy - 6.5).abs() < 1e-12);
        assert!(MaskMap::zeros(3, 3).centroid().is_none());
    }
}
