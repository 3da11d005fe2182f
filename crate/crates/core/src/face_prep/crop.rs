use std::f64::consts::PI;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::{Landmarks, Point};
use crate::error::{Error, Result};

/// Square crop: centre, side length and the rotation (radians, in (−π, π])
/// that brings the inter-eye vector onto the horizontal axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    pub center: Point,
    pub side: f64,
    pub rotation: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    #[default]
    Bilinear,
    Nearest,
}

pub fn compute_crop(landmarks: &Landmarks) -> Result<CropSpec> {
    let (l, r) = (landmarks.left_eye, landmarks.right_eye);
    if ![l.x, l.y, r.x, r.y].iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateLandmarks("non-finite eye coordinate".into()));
    }
    let (dx, dy) = (r.x - l.x, r.y - l.y);
    let dist = dx.hypot(dy);
    if dist == 0.0 {
        return Err(Error::DegenerateLandmarks("left and right eye coincide".into()));
    }
    let mut rotation = -dy.atan2(dx);
    if rotation <= -PI {
        rotation += 2.0 * PI;
    }
    Ok(CropSpec {
        center: Point::new((l.x + r.x) / 2.0, (l.y + r.y) / 2.0),
        side: 4.0 * dist,
        rotation,
    })
}

/// Samples the rotated square crop into an `out_size`×`out_size` image.
/// Pixel centres sit at half-integer coordinates; source pixels outside the
/// image contribute zero.
pub fn extract_face(image: &RgbImage, crop: &CropSpec, out_size: u32, resample: Resample) -> Result<RgbImage> {
    if out_size == 0 {
        return Err(Error::InvalidArgument("output size must be positive".into()));
    }
    if !(crop.side > 0.0 && crop.side.is_finite()) {
        return Err(Error::InvalidArgument(format!("crop side {} must be positive", crop.side)));
    }
    let (w, h) = (i64::from(image.width()), i64::from(image.height()));
    let fetch = |x: i64, y: i64| -> [f64; 3] {
        if x < 0 || y < 0 || x >= w || y >= h {
            [0.0; 3]
        } else {
            let p = image.get_pixel(x as u32, y as u32).0;
            [f64::from(p[0]), f64::from(p[1]), f64::from(p[2])]
        }
    };
    // Output axes point along the eye vector, so source = centre + R(−rotation)·t.
    let (sin, cos) = (-crop.rotation).sin_cos();
    let scale = crop.side / f64::from(out_size);
    let mut out = RgbImage::new(out_size, out_size);
    for v in 0..out_size {
        for u in 0..out_size {
            let tx = (f64::from(u) + 0.5) * scale - crop.side / 2.0;
            let ty = (f64::from(v) + 0.5) * scale - crop.side / 2.0;
            // Continuous pixel coordinates, then index space.
            let sx = crop.center.x + cos * tx - sin * ty - 0.5;
            let sy = crop.center.y + sin * tx + cos * ty - 0.5;
            let rgb = match resample {
                Resample::Nearest => fetch(sx.round() as i64, sy.round() as i64),
                Resample::Bilinear => {
                    let (x0, y0) = (sx.floor(), sy.floor());
                    let (fx, fy) = (sx - x0, sy - y0);
                    let (x0, y0) = (x0 as i64, y0 as i64);
                    let mut acc = [0.0; 3];
                    for (dx, dy, wgt) in [
                        (0, 0, (1.0 - fx) * (1.0 - fy)),
                        (1, 0, fx * (1.0 - fy)),
                        (0, 1, (1.0 - fx) * fy),
                        (1, 1, fx * fy),
                    ] {
                        if wgt == 0.0 {
                            continue;
                        }
                        let p = fetch(x0 + dx, y0 + dy);
                        for c in 0..3 {
                            acc[c] += wgt * p[c];
                        }
                    }
                    acc
                }
            };
            out.put_pixel(u, v, Rgb(rgb.map(|c| c.round().clamp(0.0, 255.0) as u8)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eyes(l: (f64, f64), r: (f64, f64)) -> Landmarks {
        Landmarks::from_eyes(Point::new(l.0, l.1), Point::new(r.0, r.1))
    }

    #[test]
    fn horizontal_eyes() {
        let c = compute_crop(&eyes((100.0, 200.0), (200.0, 200.0))).unwrap();
        assert_eq!(c.center, Point::new(150.0, 200.0));
        assert_eq!(c.side, 400.0);
        assert_eq!(c.rotation, 0.0);
    }

    #[test]
    fn vertical_eyes() {
        let c = compute_crop(&eyes((0.0, 0.0), (0.0, 100.0))).unwrap();
        assert_eq!(c.center, Point::new(0.0, 50.0));
        assert_eq!(c.side, 400.0);
        assert_eq!(c.rotation, -PI / 2.0);
    }

    #[test]
    fn reversed_eyes_give_pi() {
        let c = compute_crop(&eyes((10.0, 0.0), (0.0, 0.0))).unwrap();
        assert_eq!(c.rotation, PI);
    }

    #[test]
    fn coincident_eyes() {
        assert!(matches!(compute_crop(&eyes((0.0, 0.0), (0.0, 0.0))), Err(Error::DegenerateLandmarks(_))));
    }

    #[test]
    fn constant_colour() {
        let img = RgbImage::from_pixel(300, 300, Rgb([17, 200, 3]));
        let crop = CropSpec {
            center: Point::new(150.0, 150.0),
            side: 100.0,
            rotation: 0.3,
        };
        let out = extract_face(&img, &crop, 64, Resample::Bilinear).unwrap();
        assert!(out.pixels().all(|p| p.0 == [17, 200, 3]));
    }

    #[test]
    fn identity_copy() {
        let img = RgbImage::from_fn(512, 512, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, ((x * 7 + y * 3) % 256) as u8]));
        let crop = CropSpec {
            center: Point::new(256.0, 256.0),
            side: 512.0,
            rotation: 0.0,
        };
        assert_eq!(extract_face(&img, &crop, 512, Resample::Bilinear).unwrap(), img);
    }
}
