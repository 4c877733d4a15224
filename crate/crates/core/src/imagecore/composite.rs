use super::{ColorSpace, ImageError, MaskMap, PixelMap};

/// Paints the object albedo and a darkened shadow over the background.
///
/// `g = m_obj * albedo + (1 - m_obj) * bg * (1 - m_shw * (1 - shadow_gain))`.
/// The object matte is used as-is (alpha over), so the object covers the
/// shadow where both masks overlap.
pub fn make_guidance_composite(
    bg: &PixelMap,
    albedo: &PixelMap,
    m_obj: &MaskMap,
    m_shw: &MaskMap,
    shadow_gain: f64,
) -> Result<PixelMap, ImageError> {
    bg.same_dims(albedo)?;
    bg.check_mask(m_obj)?;
    bg.check_mask(m_shw)?;
    if !(shadow_gain > 0.0 && shadow_gain <= 1.0) {
        return Err(ImageError::InvalidParameter(format!(
            "shadow_gain must be in (0, 1], got {shadow_gain}"
        )));
    }
    for img in [bg, albedo] {
        if img.space() != ColorSpace::Linear {
            return Err(ImageError::InvalidParameter("composite inputs must be linear".into()));
        }
    }
    let c = bg.channels();
    let data = bg
        .data()
        .iter()
        .zip(albedo.data())
        .enumerate()
        .map(|(i, (&b, &a))| {
            let p = i / c;
            let (mo, ms) = (m_obj.data()[p], m_shw.data()[p]);
            let shadowed = if ms == 0.0 {
                b
            } else {
                b * (1.0 - ms * (1.0 - shadow_gain))
            };
            if mo == 0.0 {
                shadowed
            } else if mo == 1.0 {
                a
            } else {
                mo * a + (1.0 - mo) * shadowed
            }
        })
        .collect();
    PixelMap::new(bg.width(), bg.height(), c, data, ColorSpace::Linear)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (PixelMap, PixelMap) {
        let bg = PixelMap::from_fn(6, 5, 3, ColorSpace::Linear, |x, y, c| 0.1 + 0.05 * (x + y + c) as f64).unwrap();
        let albedo = PixelMap::filled(6, 5, 3, 0.7, ColorSpace::Linear);
        (bg, albedo)
    }

    #[test]
    fn no_edit_regions_returns_background() {
        let (bg, albedo) = setup();
        let z = MaskMap::zeros(6, 5);
        assert_eq!(make_guidance_composite(&bg, &albedo, &z, &z, 0.4).unwrap(), bg);
    }

    #[test]
    fn object_region_is_albedo_and_wins_over_shadow() {
        let (bg, albedo) = setup();
        let m = MaskMap::from_fn(6, 5, |x, _| if x < 3 { 1.0 } else { 0.0 }).unwrap();
        let g = make_guidance_composite(&bg, &albedo, &m, &m, 0.4).unwrap();
        for y in 0..5 {
            for x in 0..3 {
                assert_eq!(g.pixel(x, y), albedo.pixel(x, y));
            }
            for x in 3..6 {
                assert_eq!(g.pixel(x, y), bg.pixel(x, y));
            }
        }
    }

    #[test]
    fn shadow_scalar() {
        let bg = PixelMap::filled(1, 1, 1, 0.8, ColorSpace::Linear);
        let g = make_guidance_composite(
            &bg,
            &PixelMap::filled(1, 1, 1, 0.2, ColorSpace::Linear),
            &MaskMap::zeros(1, 1),
            &MaskMap::new(1, 1, vec![1.0]).unwrap(),
            0.4,
        )
        .unwrap();
        assert!((g.data()[0] - 0.32).abs() < 1e-12);
    }

    #[test]
    fn unit_gain_is_identity_outside_object() {
        let (bg, albedo) = setup();
        let shw = MaskMap::from_fn(6, 5, |x, y| ((x * y) % 4) as f64 / 3.0).unwrap();
        let g = make_guidance_composite(&bg, &albedo, &MaskMap::zeros(6, 5), &shw, 1.0).unwrap();
        assert_eq!(g, bg);
    }

    #[test]
    fn rejects_mismatch_and_bad_gain() {
        let (bg, albedo) = setup();
        let z = MaskMap::zeros(6, 5);
        assert!(make_guidance_composite(&bg, &albedo, &MaskMap::zeros(5, 5), &z, 0.4).is_err());
        assert!(make_guidance_composite(&bg, &albedo, &z, &z, 0.0).is_err());
        assert!(make_guidance_composite(&bg, &albedo, &z, &z, 1.5).is_err());
    }
}
