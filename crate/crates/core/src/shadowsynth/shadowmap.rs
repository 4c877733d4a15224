use super::{DirectionalLight, Heightfield, ShadowError};
use crate::imagecore::MaskMap;
use nalgebra::Vector3;

const SPLAT_RADIUS: f64 = 1.5;
const BIAS_FRACTION: f64 = 0.02;

/// Orthographic light-space depth buffer over the object's footprint.
struct LightBuffer {
    u: Vector3<f64>,
    w: Vector3<f64>,
    d: Vector3<f64>,
    cell: f64,
    origin: (i64, i64),
    dims: (usize, usize),
    nearest: Vec<f64>,
}

impl LightBuffer {
    fn cell_of(&self, p: &Vector3<f64>) -> (i64, i64) {
        (
            (p.dot(&self.u) / self.cell).floor() as i64,
            (p.dot(&self.w) / self.cell).floor() as i64,
        )
    }

    /// Largest `p . d` (nearest to the light) splatted over `p`'s cell.
    fn lookup(&self, p: &Vector3<f64>) -> Option<f64> {
        let (i, j) = self.cell_of(p);
        let (i, j) = (i - self.origin.0, j - self.origin.1);
        if i < 0 || j < 0 || i as usize >= self.dims.0 || j as usize >= self.dims.1 {
            return None;
        }
        let v = self.nearest[j as usize * self.dims.0 + i as usize];
        v.is_finite().then_some(v)
    }
}

/// Any unit vector orthogonal to `d`, completed to a right-handed basis.
fn basis(d: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if d.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = d.cross(&helper).normalize();
    (u, d.cross(&u))
}

/// Hard shadow of an object layer on a ground heightfield.
///
/// Object points (valid and inside `object_mask`) are splatted with radius
/// 1.5 cells into an orthographic buffer perpendicular to the light; the
/// cell size is the median ground pixel spacing. A ground pixel is in
/// shadow when the buffer holds a point nearer the light than itself by
/// more than `0.02 x` the median ground depth. The binary result is
/// softened with a 3x3 box filter.
pub fn shadow_map_directional(
    ground: &Heightfield,
    object: &Heightfield,
    object_mask: &MaskMap,
    light: &DirectionalLight,
) -> Result<MaskMap, ShadowError> {
    let (w, h) = (ground.width(), ground.height());
    if (object.width(), object.height()) != (w, h) || (object_mask.width(), object_mask.height()) != (w, h) {
        return Err(ShadowError::Geometry(
            "ground, object and mask must share one camera".into(),
        ));
    }
    let d = light.direction;
    if !d.iter().all(|v| v.is_finite()) || (d.norm() - 1.0).abs() > 1e-9 {
        return Err(ShadowError::InvalidLight("direction must be a unit vector".into()));
    }
    let occluders: Vec<Vector3<f64>> = object
        .valid_points()
        .filter(|&(x, y, _)| object_mask.get(x, y) > 0.5)
        .map(|(_, _, p)| p)
        .collect();
    if occluders.is_empty() {
        return Ok(MaskMap::zeros(w, h));
    }
    let cell = ground
        .median_spacing()
        .filter(|c| *c > 0.0)
        .ok_or_else(|| ShadowError::Geometry("ground has no adjacent valid pixels".into()))?;
    let bias = BIAS_FRACTION * ground.median_depth().unwrap_or(0.0);

    let (u, v) = basis(&d);
    let coords: Vec<(f64, f64, f64)> = occluders
        .iter()
        .map(|p| (p.dot(&u) / cell, p.dot(&v) / cell, p.dot(&d)))
        .collect();
    let reach = SPLAT_RADIUS.ceil() as i64 + 1;
    let lo_i = coords.iter().map(|c| c.0.floor() as i64).min().unwrap() - reach;
    let hi_i = coords.iter().map(|c| c.0.floor() as i64).max().unwrap() + reach;
    let lo_j = coords.iter().map(|c| c.1.floor() as i64).min().unwrap() - reach;
    let hi_j = coords.iter().map(|c| c.1.floor() as i64).max().unwrap() + reach;
    let dims = ((hi_i - lo_i + 1) as usize, (hi_j - lo_j + 1) as usize);
    if dims.0.saturating_mul(dims.1) > 1 << 26 {
        return Err(ShadowError::Geometry(
            "object footprint too large for the light buffer".into(),
        ));
    }
    let mut buf = LightBuffer {
        u,
        w: v,
        d,
        cell,
        origin: (lo_i, lo_j),
        dims,
        nearest: vec![f64::NEG_INFINITY; dims.0 * dims.1],
    };
    for &(a, b, depth) in &coords {
        let (ci, cj) = (a.floor() as i64, b.floor() as i64);
        for j in cj - reach..=cj + reach {
            for i in ci - reach..=ci + reach {
                let (dx, dy) = (i as f64 + 0.5 - a, j as f64 + 0.5 - b);
                if dx * dx + dy * dy > SPLAT_RADIUS * SPLAT_RADIUS {
                    continue;
                }
                let idx = (j - lo_j) as usize * dims.0 + (i - lo_i) as usize;
                if depth > buf.nearest[idx] {
                    buf.nearest[idx] = depth;
                }
            }
        }
    }

    let mut hard = vec![0.0; w * h];
    for (x, y, q) in ground.valid_points() {
        if let Some(near) = buf.lookup(&q) {
            if near > q.dot(&buf.d) + bias {
                hard[y * w + x] = 1.0;
            }
        }
    }
    Ok(MaskMap::new(w, h, box3(&hard, w, h))?)
}

/// 3x3 mean with the window clipped at the borders.
fn box3(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (mut s, mut n) = (0.0, 0.0);
            for yy in y.saturating_sub(1)..(y + 2).min(h) {
                for xx in x.saturating_sub(1)..(x + 2).min(w) {
                    s += src[yy * w + xx];
                    n += 1.0;
                }
            }
            out[y * w + x] = (s / n).clamp(0.0, 1.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{backproject_depth, focal_from_fov, GroundFrame};
    use super::*;
    use crate::imagecore::{dilate_mask, ColorSpace, PixelMap};

    /// Overhead camera over flat ground at depth 10 with a box top 1 m above it.
    fn box_scene() -> (Heightfield, Heightfield, MaskMap) {
        let (w, h) = (96, 96);
        let ground = backproject_depth(&PixelMap::filled(w, h, 1, 10.0, ColorSpace::Raw), 50.0).unwrap();
        let inside = |x: usize, y: usize| (40..52).contains(&x) && (40..52).contains(&y);
        let obj_depth =
            PixelMap::from_fn(w, h, 1, ColorSpace::Raw, |x, y, _| if inside(x, y) { 9.0 } else { 0.0 }).unwrap();
        let object = backproject_depth(&obj_depth, 50.0).unwrap();
        let mask = MaskMap::from_fn(w, h, |x, y| inside(x, y) as u8 as f64).unwrap();
        (ground, object, mask)
    }

    #[test]
    fn no_object_no_shadow() {
        let (ground, object, _) = box_scene();
        let frame = GroundFrame::fit(&ground).unwrap();
        let l = DirectionalLight::from_angles(0.0, 45.0, &frame).unwrap();
        let m = shadow_map_directional(&ground, &object, &MaskMap::zeros(96, 96), &l).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn offset_follows_elevation() {
        let (ground, object, mask) = box_scene();
        let frame = GroundFrame::fit(&ground).unwrap();
        let f = focal_from_fov(96, 50.0);
        // footprint centroid: box top points dropped onto the ground plane
        let top: Vec<_> = object
            .valid_points()
            .filter(|&(x, y, _)| mask.get(x, y) > 0.5)
            .map(|(_, _, p)| p)
            .collect();
        let foot_x = top.iter().map(|p| p.x).sum::<f64>() / top.len() as f64 * f / 10.0 + 47.5;
        let foot_y = top.iter().map(|p| p.y).sum::<f64>() / top.len() as f64 * f / 10.0 + 47.5;
        for el in [30.0f64, 45.0, 60.0] {
            let l = DirectionalLight::from_angles(0.0, el, &frame).unwrap();
            let s = shadow_map_directional(&ground, &object, &mask, &l).unwrap();
            let (cx, cy) = s.centroid().unwrap();
            let expected = 1.0 / el.to_radians().tan() * f / 10.0;
            assert!((cx - foot_x).abs() <= 1.0, "el {el}: cx {cx} vs {foot_x}");
            assert!(
                (cy - foot_y - expected).abs() <= 1.0,
                "el {el}: dy {} vs {expected}",
                cy - foot_y
            );
        }
    }

    #[test]
    fn overhead_light_stays_near_footprint() {
        let (ground, object, mask) = box_scene();
        let frame = GroundFrame::fit(&ground).unwrap();
        let l = DirectionalLight::from_angles(0.0, 90.0, &frame).unwrap();
        let s = shadow_map_directional(&ground, &object, &mask, &l).unwrap();
        assert!(!s.is_empty());
        // the footprint of a 12 px top at 9 m is 10.8 px on the ground
        let footprint = MaskMap::from_fn(96, 96, |x, y| {
            ((41..51).contains(&x) && (41..51).contains(&y)) as u8 as f64
        })
        .unwrap();
        let margin = dilate_mask(&footprint, 5).unwrap();
        for y in 0..96 {
            for x in 0..96 {
                if s.get(x, y) > 0.5 {
                    assert_eq!(margin.get(x, y), 1.0, "({x},{y})");
                }
            }
        }
    }

    #[test]
    fn output_in_unit_range() {
        let (ground, object, mask) = box_scene();
        let frame = GroundFrame::fit(&ground).unwrap();
        let l = DirectionalLight::from_angles(37.0, 20.0, &frame).unwrap();
        let s = shadow_map_directional(&ground, &object, &mask, &l).unwrap();
        assert!(s.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(s.data().iter().any(|&v| v > 0.0 && v < 1.0));
    }
}
