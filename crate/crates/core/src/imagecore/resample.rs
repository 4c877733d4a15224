use super::{ImageError, MaskMap, PixelMap};

/// Filter taps `(source index, weight)` for one output sample along an axis.
type Taps = Vec<(usize, f64)>;

/// Area coverage when shrinking, triangle interpolation with half-pixel
/// centers when enlarging. Weights of every output sum to one.
fn axis_taps(input: usize, output: usize) -> Vec<Taps> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|i| {
            if scale >= 1.0 {
                let lo = i as f64 * scale;
                let hi = (i + 1) as f64 * scale;
                let first = lo.floor() as usize;
                let last = ((hi.ceil() as usize).max(first + 1)).min(input);
                let mut taps: Taps = (first..last)
                    .map(|j| {
                        let overlap = (hi.min(j as f64 + 1.0) - lo.max(j as f64)).max(0.0);
                        (j, overlap / scale)
                    })
                    .filter(|&(_, w)| w > 0.0)
                    .collect();
                let total: f64 = taps.iter().map(|t| t.1).sum();
                for t in &mut taps {
                    t.1 /= total;
                }
                taps
            } else {
                let center = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
                let j0 = center.floor() as usize;
                let frac = center - j0 as f64;
                if frac == 0.0 || j0 + 1 >= input {
                    vec![(j0, 1.0)]
                } else {
                    vec![(j0, 1.0 - frac), (j0 + 1, frac)]
                }
            }
        })
        .collect()
}

/// Weighted sum written relative to the first tap so that constant inputs
/// reproduce exactly.
#[inline]
fn apply(taps: &Taps, sample: impl Fn(usize) -> f64) -> f64 {
    let base = sample(taps[0].0);
    base + taps.iter().map(|&(j, w)| w * (sample(j) - base)).sum::<f64>()
}

fn resample_interleaved(data: &[f64], w: usize, h: usize, c: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    let xt = axis_taps(w, out_w);
    let yt = axis_taps(h, out_h);
    let mut rows = vec![0.0; out_w * h * c];
    for y in 0..h {
        for (ox, taps) in xt.iter().enumerate() {
            for ch in 0..c {
                rows[(y * out_w + ox) * c + ch] = apply(taps, |x| data[(y * w + x) * c + ch]);
            }
        }
    }
    let mut out = vec![0.0; out_w * out_h * c];
    for (oy, taps) in yt.iter().enumerate() {
        for ox in 0..out_w {
            for ch in 0..c {
                out[(oy * out_w + ox) * c + ch] = apply(taps, |y| rows[(y * out_w + ox) * c + ch]);
            }
        }
    }
    out
}

/// Types that can be resampled to a new resolution.
pub trait Resample: Sized {
    fn resample(&self, out_w: usize, out_h: usize) -> Result<Self, ImageError>;
}

impl Resample for PixelMap {
    fn resample(&self, out_w: usize, out_h: usize) -> Result<Self, ImageError> {
        if out_w == 0 || out_h == 0 {
            return Err(ImageError::ZeroSize(out_w, out_h));
        }
        if (out_w, out_h) == (self.width(), self.height()) {
            return Ok(self.clone());
        }
        let data = resample_interleaved(self.data(), self.width(), self.height(), self.channels(), out_w, out_h);
        // convex combinations can undershoot zero by an ulp
        let data = match self.space() {
            super::ColorSpace::Linear => data.into_iter().map(|v| v.max(0.0)).collect(),
            super::ColorSpace::Srgb => data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            super::ColorSpace::Raw => data,
        };
        PixelMap::new(out_w, out_h, self.channels(), data, self.space())
    }
}

impl Resample for MaskMap {
    fn resample(&self, out_w: usize, out_h: usize) -> Result<Self, ImageError> {
        if out_w == 0 || out_h == 0 {
            return Err(ImageError::ZeroSize(out_w, out_h));
        }
        if (out_w, out_h) == (self.width(), self.height()) {
            return Ok(self.clone());
        }
        let data = resample_interleaved(self.data(), self.width(), self.height(), 1, out_w, out_h);
        MaskMap::from_clamped(out_w, out_h, data)
    }
}

/// Resamples a mask or pixel map to `out_w x out_h`.
pub fn downsample_bilinear<T: Resample>(m: &T, out_w: usize, out_h: usize) -> Result<T, ImageError> {
    m.resample(out_w, out_h)
}
