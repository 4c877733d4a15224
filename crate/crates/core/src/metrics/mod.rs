//! Reference-based image metrics (PSNR, SSIM, RMSE, MAE) and Thurstone
//! Case V scaling of paired-comparison studies.

mod report;
mod thurstone;

pub use report::{mean_values, metrics_csv, metrics_markdown, study_csv, study_markdown, MetricKind, MetricRow};
pub use thurstone::{
    read_votes_csv, simulate_probit_votes, thurstone_case_v, thurstone_matrix_bootstrap, thurstone_scores, Choice,
    PreferenceMatrix, StudyResult, Vote,
};

use crate::imagecore::{ImageError, MaskMap, PixelMap};
use thiserror::Error;

/// PSNR reported when the images are (numerically) identical.
pub const PSNR_CAP_DB: f64 = 100.0;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("color spaces differ: {0:?} vs {1:?}")]
    SpaceMismatch(crate::imagecore::ColorSpace, crate::imagecore::ColorSpace),
    #[error("votes row {row}: {message}")]
    BadVote { row: usize, message: String },
    #[error("pair {0} vs {1} was never presented")]
    MissingPair(String, String),
    #[error("study needs at least two methods")]
    TooFewMethods,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Full,
    Masked,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub rmse: f64,
    pub mae: f64,
    pub region: Region,
}

/// `20 log10(1 / rmse)` for unit-range signals, capped at 100 dB.
pub fn psnr_from_rmse(rmse: f64) -> f64 {
    if rmse < 1e-5 {
        PSNR_CAP_DB
    } else {
        (20.0 * (1.0 / rmse).log10()).min(PSNR_CAP_DB)
    }
}

/// Metrics on values clamped to `[0, 1]`. With a mask, only pixels with
/// mask >= 0.5 count, and SSIM averages windows centered on them.
pub fn pixel_metrics(a: &PixelMap, b: &PixelMap, mask: Option<&MaskMap>) -> Result<MetricReport, MetricsError> {
    a.same_dims(b)?;
    if a.space() != b.space() {
        return Err(MetricsError::SpaceMismatch(a.space(), b.space()));
    }
    if let Some(m) = mask {
        a.check_mask(m)?;
    }
    let c = a.channels();
    let keep = |p: usize| mask.is_none_or(|m| m.data()[p] >= 0.5);
    let (mut abs, mut sq, mut n) = (0.0, 0.0, 0usize);
    for (i, (&x, &y)) in a.data().iter().zip(b.data()).enumerate() {
        if keep(i / c) {
            let d = x.clamp(0.0, 1.0) - y.clamp(0.0, 1.0);
            abs += d.abs();
            sq += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(MetricsError::EmptyMask);
    }
    let rmse = (sq / n as f64).sqrt();
    Ok(MetricReport {
        psnr: psnr_from_rmse(rmse),
        ssim: ssim_masked(a, b, mask)?,
        rmse,
        mae: abs / n as f64,
        region: if mask.is_some() { Region::Masked } else { Region::Full },
    })
}

/// Mean SSIM over all valid 11x11 windows, averaged over channels.
pub fn ssim(a: &PixelMap, b: &PixelMap) -> Result<f64, MetricsError> {
    a.same_dims(b)?;
    ssim_masked(a, b, None)
}

/// Gaussian taps of length `n`, centered, normalized in 2D.
fn window(n: usize) -> Vec<f64> {
    let mid = (n as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..n)
        .map(|i| (-(i as f64 - mid).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Images smaller than the window use a window shrunk to the image size.
fn ssim_masked(a: &PixelMap, b: &PixelMap, mask: Option<&MaskMap>) -> Result<f64, MetricsError> {
    let (w, h, c) = a.dims();
    if w == 0 || h == 0 {
        return Err(ImageError::ZeroSize(w, h).into());
    }
    let (kw, kh) = (SSIM_WINDOW.min(w), SSIM_WINDOW.min(h));
    let (gx, gy) = (window(kw), window(kh));
    let at = |img: &PixelMap, x: usize, y: usize, ch: usize| img.get(x, y, ch).clamp(0.0, 1.0);
    let (mut total, mut count) = (0.0, 0usize);
    for y0 in 0..=h - kh {
        for x0 in 0..=w - kw {
            let (cx, cy) = (x0 + kw / 2, y0 + kh / 2);
            if mask.is_some_and(|m| m.get(cx, cy) < 0.5) {
                continue;
            }
            for ch in 0..c {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (j, wy) in gy.iter().enumerate() {
                    for (i, wx) in gx.iter().enumerate() {
                        let wt = wx * wy;
                        let (va, vb) = (at(a, x0 + i, y0 + j, ch), at(b, x0 + i, y0 + j, ch));
                        ma += wt * va;
                        mb += wt * vb;
                        saa += wt * va * va;
                        sbb += wt * vb * vb;
                        sab += wt * va * vb;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(MetricsError::EmptyMask);
    }
    Ok(total / count as f64)
}
