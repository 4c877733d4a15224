//! Final assembly: the shadow matte that carries synthesized shadows onto
//! the untouched background, detail transfer for cutouts, and the
//! re-exposure wrapper for backbones that render too dark.

use crate::imagecore::{ColorSpace, ImageError, MaskMap, PixelMap};

/// Default guard in the matte ratio.
pub const MATTE_EPS: f64 = 1e-4;

/// Per-channel attenuation in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowMatte(PixelMap);

impl ShadowMatte {
    pub fn new(map: PixelMap) -> Result<Self, ImageError> {
        if let Some((index, &value)) = map.data().iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(ImageError::OutOfRange {
                index,
                value,
                what: "matte [0,1]",
            });
        }
        Ok(Self(map))
    }

    pub fn map(&self) -> &PixelMap {
        &self.0
    }

    pub fn into_map(self) -> PixelMap {
        self.0
    }
}

fn require_linear(img: &PixelMap, what: &str) -> Result<(), ImageError> {
    if img.space() != ColorSpace::Linear {
        return Err(ImageError::InvalidParameter(format!("{what} must be linear")));
    }
    Ok(())
}

/// `clamp(with / (without + eps), 0, 1)`, with the matte forced to 1 where
/// `without < eps` or where the two renders agree exactly.
pub fn shadow_matte(img_with: &PixelMap, img_without: &PixelMap, eps: f64) -> Result<ShadowMatte, ImageError> {
    img_with.same_dims(img_without)?;
    require_linear(img_with, "render with shadow")?;
    require_linear(img_without, "render without shadow")?;
    if eps.is_nan() || eps <= 0.0 {
        return Err(ImageError::InvalidParameter(format!(
            "matte eps must be positive, got {eps}"
        )));
    }
    let data = img_with
        .data()
        .iter()
        .zip(img_without.data())
        .map(|(&a, &b)| {
            if b < eps || a == b {
                1.0
            } else {
                (a / (b + eps)).clamp(0.0, 1.0)
            }
        })
        .collect();
    ShadowMatte::new(PixelMap::new(
        img_with.width(),
        img_with.height(),
        img_with.channels(),
        data,
        ColorSpace::Raw,
    )?)
}

/// `m_obj * with + (1 - m_obj) * (bg * matte)`.
pub fn preserve_background(
    bg: &PixelMap,
    img_with: &PixelMap,
    matte: &ShadowMatte,
    m_obj: &MaskMap,
) -> Result<PixelMap, ImageError> {
    bg.same_dims(img_with)?;
    bg.same_dims(matte.map())?;
    bg.check_mask(m_obj)?;
    require_linear(bg, "background")?;
    require_linear(img_with, "render")?;
    let c = bg.channels();
    let data = bg
        .data()
        .iter()
        .zip(img_with.data())
        .zip(matte.map().data())
        .enumerate()
        .map(|(i, ((&b, &r), &t))| {
            let m = m_obj.data()[i / c];
            let shadowed = if t == 1.0 { b } else { b * t };
            match m {
                0.0 => shadowed,
                1.0 => r,
                _ => m * r + (1.0 - m) * shadowed,
            }
        })
        .collect();
    PixelMap::new(bg.width(), bg.height(), c, data, ColorSpace::Linear)
}

/// Normalized Gaussian taps with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>, ImageError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(ImageError::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    Ok(k.into_iter().map(|v| v / s).collect())
}

/// Mirror index with the edge sample repeated (`b a | a b c | c b`).
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Separable Gaussian blur with reflect padding.
pub fn gaussian_blur(img: &PixelMap, sigma: f64) -> Result<PixelMap, ImageError> {
    let k = gaussian_kernel(sigma)?;
    let r = (k.len() / 2) as i64;
    let (w, h, c) = img.dims();
    let src = img.data();
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                tmp[(y * w + x) * c + ch] = k
                    .iter()
                    .enumerate()
                    .map(|(t, kv)| kv * src[(y * w + reflect(x as i64 + t as i64 - r, w)) * c + ch])
                    .sum();
            }
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out[(y * w + x) * c + ch] = k
                    .iter()
                    .enumerate()
                    .map(|(t, kv)| kv * tmp[(reflect(y as i64 + t as i64 - r, h) * w + x) * c + ch])
                    .sum();
            }
        }
    }
    PixelMap::new(w, h, c, out, img.space())
}

/// `tgt + mask * (src - blur(src, sigma))`, clamped at zero. Without a
/// mask the detail is added everywhere.
pub fn detail_transfer(
    src: &PixelMap,
    tgt: &PixelMap,
    sigma: f64,
    mask: Option<&MaskMap>,
) -> Result<PixelMap, ImageError> {
    src.same_dims(tgt)?;
    require_linear(src, "detail source")?;
    require_linear(tgt, "detail target")?;
    if let Some(m) = mask {
        tgt.check_mask(m)?;
    }
    let blurred = gaussian_blur(src, sigma)?;
    let c = tgt.channels();
    let data = tgt
        .data()
        .iter()
        .zip(src.data())
        .zip(blurred.data())
        .enumerate()
        .map(|(i, ((&t, &s), &b))| {
            let m = mask.map_or(1.0, |m| m.data()[i / c]);
            if m == 0.0 {
                t
            } else {
                (t + m * (s - b)).max(0.0)
            }
        })
        .collect();
    PixelMap::new(tgt.width(), tgt.height(), c, data, ColorSpace::Linear)
}

/// Scales the linear input by `factor`, renders, and divides the linear
/// output by `factor`.
pub fn reexposed_render<E: From<ImageError>>(
    input: &PixelMap,
    factor: f64,
    render: impl FnOnce(&PixelMap) -> Result<PixelMap, E>,
) -> Result<PixelMap, E> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(ImageError::InvalidParameter(format!("exposure factor must be positive, got {factor}")).into());
    }
    require_linear(input, "re-exposed input")?;
    if factor == 1.0 {
        return render(input);
    }
    let out = render(&input.scaled(factor)?)?;
    Ok(out.scaled(1.0 / factor)?)
}
