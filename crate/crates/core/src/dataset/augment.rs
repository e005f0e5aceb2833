//! Geometric augmentation of cutouts: rotation, scaling and horizontal
//! reflection with nearest-neighbour resampling.

use image::{Rgba, RgbaImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cutout::Cutout;
use super::DatasetError;

pub const SCALE_RANGE: (f64, f64) = (0.5, 1.5);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub rotation_deg: f64,
    pub scale: f64,
    pub reflect: bool,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        rotation_deg: 0.0,
        scale: 1.0,
        reflect: false,
    };

    pub fn random(rng: &mut impl Rng) -> Self {
        Transform {
            rotation_deg: rng.random_range(0.0..360.0),
            scale: rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1),
            reflect: rng.random_bool(0.5),
        }
    }
}

/// Applies `t` about the cutout center and crops to the new alpha support.
pub fn apply_transform(cutout: &Cutout, t: &Transform) -> Result<Cutout, DatasetError> {
    if !(t.scale > 0.0) || !t.scale.is_finite() || !t.rotation_deg.is_finite() {
        return Err(DatasetError::DegenerateScale(t.scale));
    }
    let (w, h) = (f64::from(cutout.width()), f64::from(cutout.height()));
    let (s, c) = t.rotation_deg.to_radians().sin_cos();
    // forward map: p' = R * scale * F * (p - center)
    let fwd = |x: f64, y: f64| {
        let x = if t.reflect { -x } else { x } * t.scale;
        let y = y * t.scale;
        (c * x - s * y, s * x + c * y)
    };
    let corners = [(-w / 2.0, -h / 2.0), (w / 2.0, -h / 2.0), (w / 2.0, h / 2.0), (-w / 2.0, h / 2.0)];
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (x, y) in corners {
        let (u, v) = fwd(x, y);
        x0 = x0.min(u);
        x1 = x1.max(u);
        y0 = y0.min(v);
        y1 = y1.max(v);
    }
    let ow = (x1 - x0 - 1e-9).ceil().max(1.0) as u32;
    let oh = (y1 - y0 - 1e-9).ceil().max(1.0) as u32;
    let (mx, my) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let src = &cutout.image;
    let out = RgbaImage::from_fn(ow, oh, |ox, oy| {
        let u = f64::from(ox) + 0.5 - f64::from(ow) / 2.0 + mx;
        let v = f64::from(oy) + 0.5 - f64::from(oh) / 2.0 + my;
        let (mut x, y) = ((c * u + s * v) / t.scale, (-s * u + c * v) / t.scale);
        if t.reflect {
            x = -x;
        }
        let (sx, sy) = ((x + w / 2.0).floor(), (y + h / 2.0).floor());
        if sx >= 0.0 && sy >= 0.0 && sx < w && sy < h {
            *src.get_pixel(sx as u32, sy as u32)
        } else {
            Rgba([0, 0, 0, 0])
        }
    });
    Cutout::new(cutout.class, out).ok_or(DatasetError::DegenerateScale(t.scale))
}

pub fn augment(cutout: &Cutout, rng: &mut impl Rng) -> Result<(Cutout, Transform), DatasetError> {
    let t = Transform::random(rng);
    Ok((apply_transform(cutout, &t)?, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::ObjectClass;
    use crate::dataset::cutout::procedural_cutout;

    fn tube() -> Cutout {
        procedural_cutout(ObjectClass::CentrifugeTestTube, [1.0, 1.0])
    }

    fn reflect() -> Transform {
        Transform {
            reflect: true,
            ..Transform::IDENTITY
        }
    }

    #[test]
    fn identity_is_exact() {
        let c = procedural_cutout(ObjectClass::Pipettor, [1.03, 0.97]);
        assert_eq!(apply_transform(&c, &Transform::IDENTITY).unwrap(), c);
    }

    #[test]
    fn reflection_is_an_involution() {
        // an L shape has no mirror symmetry
        let img = image::RgbaImage::from_fn(12, 20, |x, y| {
            image::Rgba([200, 10, 10, if x < 4 || y >= 16 { 255 } else { 0 }])
        });
        let c = Cutout::new(ObjectClass::Swab, img).unwrap();
        let once = apply_transform(&c, &reflect()).unwrap();
        assert_ne!(once.mask(), c.mask());
        assert_eq!(apply_transform(&once, &reflect()).unwrap().mask(), c.mask());
    }

    #[test]
    fn quarter_turn_preserves_area() {
        let c = tube();
        let r = apply_transform(
            &c,
            &Transform {
                rotation_deg: 90.0,
                ..Transform::IDENTITY
            },
        )
        .unwrap();
        assert_eq!((r.width(), r.height()), (c.height(), c.width()));
        let (a, b) = (c.mask().count() as f64, r.mask().count() as f64);
        assert!((a - b).abs() / a <= 0.03);
    }

    #[test]
    fn arbitrary_rotation_area_scales_with_square_of_scale() {
        let c = tube();
        for (deg, s) in [(33.0, 1.0), (147.0, 1.5), (260.0, 0.5)] {
            let r = apply_transform(
                &c,
                &Transform {
                    rotation_deg: deg,
                    scale: s,
                    reflect: false,
                },
            )
            .unwrap();
            let ratio = r.mask().count() as f64 / (c.mask().count() as f64 * s * s);
            assert!((ratio - 1.0).abs() < 0.06, "{deg} {s}: {ratio}");
        }
    }

    #[test]
    fn degenerate_scale_rejected() {
        let t = Transform {
            scale: 0.0,
            ..Transform::IDENTITY
        };
        assert!(matches!(apply_transform(&tube(), &t), Err(DatasetError::DegenerateScale(_))));
        for scale in [-1.0, f64::NAN] {
            let t = Transform {
                scale,
                ..Transform::IDENTITY
            };
            assert!(matches!(apply_transform(&tube(), &t), Err(DatasetError::DegenerateScale(_))));
        }
    }
}
