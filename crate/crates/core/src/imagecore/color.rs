use super::{ColorSpace, ImageError, PixelMap};

/// sRGB electro-optical transfer (encoded -> linear).
#[inline]
pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Inverse of [`srgb_to_linear`].
#[inline]
pub fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.0031308 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// Converts between linear and sRGB encodings. The alpha channel of a
/// four-channel map is copied unchanged. Raw maps and maps already in the
/// target space are returned as-is.
pub fn color_transfer(img: &PixelMap, target: ColorSpace) -> Result<PixelMap, ImageError> {
    if img.space() == target || img.space() == ColorSpace::Raw || target == ColorSpace::Raw {
        return Ok(img.clone());
    }
    let channels = img.channels();
    let curve: fn(f64) -> f64 = match target {
        ColorSpace::Linear => srgb_to_linear,
        _ => linear_to_srgb,
    };
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if channels == 4 && i % 4 == 3 {
                v
            } else if target == ColorSpace::Srgb {
                // linear values above 1 cannot be encoded
                curve(v.min(1.0)).clamp(0.0, 1.0)
            } else {
                curve(v).max(0.0)
            }
        })
        .collect();
    PixelMap::new(img.width(), img.height(), channels, data, target)
}
