//! Full-frame and masked PSNR/SSIM/RMSE/MAE for a reference image against
//! progressively noisier copies, printed as a markdown table.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use spotlight::imagecore::{ColorSpace, MaskMap, PixelMap};
use spotlight::metrics::{metrics_markdown, pixel_metrics, MetricKind, MetricRow};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reference = PixelMap::from_fn(64, 64, 3, ColorSpace::Srgb, |x, y, c| {
        0.5 + 0.4 * ((x as f64 / 7.0).sin() * (y as f64 / 11.0 + c as f64).cos())
    })?;
    let center = MaskMap::from_fn(64, 64, |x, y| {
        ((16..48).contains(&x) && (16..48).contains(&y)) as u8 as f64
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let mut rows = Vec::new();
    for sigma in [0.0f64, 0.01, 0.05, 0.1] {
        let noise = Normal::new(0.0, sigma)?;
        // noise only outside the center square, so the masked score stays higher
        let noisy = PixelMap::from_fn(64, 64, 3, ColorSpace::Srgb, |x, y, c| {
            let n = noise.sample(&mut rng);
            let v = reference.get(x, y, c);
            if center.get(x, y) > 0.0 { v + n / 4.0 } else { v + n }.clamp(0.0, 1.0)
        })?;
        rows.push(MetricRow::new(
            format!("sigma {sigma}"),
            pixel_metrics(&noisy, &reference, None)?,
        ));
        rows.push(MetricRow::new(
            format!("sigma {sigma} (center)"),
            pixel_metrics(&noisy, &reference, Some(&center))?,
        ));
    }
    print!("{}", metrics_markdown(&rows, &MetricKind::PIXEL));
    Ok(())
}
