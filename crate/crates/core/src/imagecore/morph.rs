use super::{ImageError, MaskMap};

/// Hard threshold: values `>= 0.5` become 1.
pub fn binarize(m: &MaskMap) -> MaskMap {
    MaskMap::new(
        m.width(),
        m.height(),
        m.data().iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect(),
    )
    .expect("binary values are in range")
}

fn check_kernel(k: usize) -> Result<usize, ImageError> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(ImageError::BadKernel(k));
    }
    Ok(k / 2)
}

/// Separable square-window max (`max == true`) or min filter with the
/// window clipped at the borders.
fn window_filter(m: &MaskMap, radius: usize, max: bool) -> MaskMap {
    let (w, h) = (m.width(), m.height());
    let pick = |a: f64, b: f64| if max { a.max(b) } else { a.min(b) };
    let init = if max { 0.0 } else { 1.0 };
    let mut rows = vec![init; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            rows[y * w + x] = (lo..=hi).fold(init, |acc, xx| pick(acc, m.get(xx, y)));
        }
    }
    let mut out = vec![init; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).fold(init, |acc, yy| pick(acc, rows[yy * w + x]));
        }
    }
    MaskMap::new(w, h, out).expect("filtered binary mask in range")
}

/// Binarizes `m` at 0.5 and dilates it with a `k x k` square window.
pub fn dilate_mask(m: &MaskMap, k: usize) -> Result<MaskMap, ImageError> {
    let radius = check_kernel(k)?;
    let bin = binarize(m);
    if radius == 0 || m.width() == 0 || m.height() == 0 {
        return Ok(bin);
    }
    Ok(window_filter(&bin, radius, true))
}

/// Binarizes `m` at 0.5 and erodes it with a `k x k` square window.
pub fn erode_mask(m: &MaskMap, k: usize) -> Result<MaskMap, ImageError> {
    let radius = check_kernel(k)?;
    let bin = binarize(m);
    if radius == 0 || m.width() == 0 || m.height() == 0 {
        return Ok(bin);
    }
    Ok(window_filter(&bin, radius, false))
}

/// Morphological close (dilate then erode). Never removes a set pixel.
pub fn close_mask(m: &MaskMap, k: usize) -> Result<MaskMap, ImageError> {
    erode_mask(&dilate_mask(m, k)?, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_dilate(m: &MaskMap, k: usize) -> Vec<f64> {
        let r = (k / 2) as i64;
        let (w, h) = (m.width() as i64, m.height() as i64);
        let mut out = vec![0.0; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                let mut v: f64 = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (xx, yy) = (x + dx, y + dy);
                        if xx >= 0 && yy >= 0 && xx < w && yy < h && m.get(xx as usize, yy as usize) >= 0.5 {
                            v = 1.0;
                        }
                    }
                }
                out[(y * w + x) as usize] = v;
            }
        }
        out
    }

    fn single(w: usize, h: usize, px: usize, py: usize) -> MaskMap {
        MaskMap::from_fn(w, h, |x, y| if (x, y) == (px, py) { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn empty_stays_empty() {
        assert!(dilate_mask(&MaskMap::zeros(20, 10), 33).unwrap().is_empty());
    }

    #[test]
    fn centered_pixel_gives_full_block() {
        let d = dilate_mask(&single(64, 64, 32, 32), 33).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                let inside = (16..=48).contains(&x) && (16..=48).contains(&y);
                assert_eq!(d.get(x, y), if inside { 1.0 } else { 0.0 }, "({x},{y})");
            }
        }
        assert_eq!(d.count_above(0.5), 33 * 33);
        assert_eq!(d.data(), brute_dilate(&single(64, 64, 32, 32), 33).as_slice());
    }

    #[test]
    fn corner_pixel_is_clipped() {
        let d = dilate_mask(&single(64, 64, 0, 0), 33).unwrap();
        assert_eq!(d.count_above(0.5), 17 * 17);
        assert_eq!(d.get(16, 16), 1.0);
        assert_eq!(d.get(17, 0), 0.0);
    }

    #[test]
    fn even_kernel_rejected() {
        assert_eq!(dilate_mask(&MaskMap::zeros(4, 4), 4), Err(ImageError::BadKernel(4)));
        assert_eq!(dilate_mask(&MaskMap::zeros(4, 4), 0), Err(ImageError::BadKernel(0)));
    }

    #[test]
    fn close_never_shrinks() {
        let m = MaskMap::from_fn(9, 9, |x, y| if x == 4 || (x == 0 && y == 8) { 1.0 } else { 0.0 }).unwrap();
        let c = close_mask(&m, 3).unwrap();
        for (a, b) in m.data().iter().zip(c.data()) {
            assert!(b >= a);
        }
    }

    fn arb_mask() -> impl Strategy<Value = MaskMap> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(0.0f64..=1.0, w * h).prop_map(move |d| MaskMap::new(w, h, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn size_one_kernel_is_binarization(m in arb_mask()) {
            prop_assert_eq!(dilate_mask(&m, 1).unwrap(), binarize(&m));
        }

        #[test]
        fn dilation_matches_brute_force(m in arb_mask(), r in 0usize..4) {
            let k = 2 * r + 1;
            let got = dilate_mask(&m, k).unwrap();
            let want = brute_dilate(&m, k);
            prop_assert_eq!(got.data(), want.as_slice());
        }

        #[test]
        fn dilation_is_monotone(m in arb_mask(), scale in 0.0f64..=1.0, r in 0usize..4) {
            let smaller = MaskMap::new(m.width(), m.height(), m.data().iter().map(|v| v * scale).collect()).unwrap();
            let k = 2 * r + 1;
            let a = dilate_mask(&smaller, k).unwrap();
            let b = dilate_mask(&m, k).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!(x <= y);
            }
        }
    }
}
