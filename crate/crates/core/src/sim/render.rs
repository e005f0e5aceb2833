//! Ray-cast depth camera over the analytic scene.

use std::io::{BufRead, Read, Write};

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use super::scene::{CameraIntrinsics, CameraPose, SceneObject, Shape};

const MIN_T: f64 = 1e-9;

/// Depth raster in meters, row-major, `0.0` = no return. The stored value is
/// the camera-frame z of the hit point.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub intrinsics: CameraIntrinsics,
    pub samples: Vec<f64>,
    pub timestamp: f64,
}

impl DepthFrame {
    pub fn new(intrinsics: CameraIntrinsics, samples: Vec<f64>, timestamp: f64) -> Option<Self> {
        let n = intrinsics.width as usize * intrinsics.height as usize;
        (samples.len() == n && samples.iter().all(|d| *d >= 0.0)).then_some(DepthFrame {
            intrinsics,
            samples,
            timestamp,
        })
    }

    pub fn width(&self) -> u32 {
        self.intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.intrinsics.height
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> f64 {
        self.samples[(v * self.intrinsics.width + u) as usize]
    }
}

#[derive(Debug, Error)]
pub enum DepthIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed depth header: {0}")]
    Header(String),
    #[error("depth payload has {got} bytes, expected {expected}")]
    Truncated { got: usize, expected: usize },
}

/// Writes the frame as a one-line text header `width height fx fy cx cy`
/// followed by 16-bit little-endian millimeters.
pub fn write_depth_frame(frame: &DepthFrame, mut w: impl Write) -> Result<(), DepthIoError> {
    let i = &frame.intrinsics;
    writeln!(w, "{} {} {} {} {} {}", i.width, i.height, i.fx, i.fy, i.cx, i.cy)?;
    let mut buf = Vec::with_capacity(frame.samples.len() * 2);
    for d in &frame.samples {
        let mm = (d * 1000.0).round().clamp(0.0, f64::from(u16::MAX)) as u16;
        buf.extend_from_slice(&mm.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_depth_frame(r: impl Read) -> Result<DepthFrame, DepthIoError> {
    let mut r = std::io::BufReader::new(r);
    let mut header = String::new();
    r.read_line(&mut header)?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 {
        return Err(DepthIoError::Header(header.trim_end().to_string()));
    }
    let bad = || DepthIoError::Header(header.trim_end().to_string());
    let width: u32 = fields[0].parse().map_err(|_| bad())?;
    let height: u32 = fields[1].parse().map_err(|_| bad())?;
    let f: Vec<f64> = fields[2..]
        .iter()
        .map(|s| s.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let intrinsics = CameraIntrinsics {
        width,
        height,
        fx: f[0],
        fy: f[1],
        cx: f[2],
        cy: f[3],
    };
    intrinsics.validate().map_err(DepthIoError::Header)?;
    let expected = width as usize * height as usize * 2;
    let mut payload = Vec::with_capacity(expected);
    r.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(DepthIoError::Truncated {
            got: payload.len(),
            expected,
        });
    }
    let samples = payload
        .chunks_exact(2)
        .map(|c| f64::from(u16::from_le_bytes([c[0], c[1]])) / 1000.0)
        .collect();
    Ok(DepthFrame {
        intrinsics,
        samples,
        timestamp: 0.0,
    })
}

/// Per-pixel nearest hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Index into the scene object list.
    pub object: usize,
    /// Camera-frame depth.
    pub depth: f64,
    pub world: Point3<f64>,
}

#[derive(Debug, Clone)]
pub struct RenderSettings {
    pub max_range: f64,
    pub quantize_mm: bool,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            max_range: 4.0,
            quantize_mm: false,
        }
    }
}

/// Camera-frame direction of the ray through pixel `(u, v)`, scaled so its
/// z component is one.
#[inline]
pub fn pixel_ray(intr: &CameraIntrinsics, u: f64, v: f64) -> Vector3<f64> {
    Vector3::new((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0)
}

/// Smallest positive ray parameter at which `o + t d` meets the object.
pub fn intersect(obj: &SceneObject, o: &Point3<f64>, d: &Vector3<f64>) -> Option<f64> {
    let c = obj.position;
    match obj.shape {
        Shape::Plane { normal } => {
            let n = Vector3::from(normal);
            let denom = n.dot(d);
            if denom.abs() < 1e-15 {
                return None;
            }
            let t = n.dot(&(c - o.coords)) / denom;
            (t > MIN_T).then_some(t)
        }
        Shape::Box { half_extents } => {
            let mut t0 = f64::NEG_INFINITY;
            let mut t1 = f64::INFINITY;
            for k in 0..3 {
                let lo = c[k] - half_extents[k];
                let hi = c[k] + half_extents[k];
                if d[k].abs() < 1e-15 {
                    if o[k] < lo || o[k] > hi {
                        return None;
                    }
                } else {
                    let a = (lo - o[k]) / d[k];
                    let b = (hi - o[k]) / d[k];
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
            }
            if t1 < t0 || t1 <= MIN_T {
                return None;
            }
            Some(if t0 > MIN_T { t0 } else { t1 })
        }
        Shape::Cylinder { radius, height } => {
            let (zlo, zhi) = (c.z - height / 2.0, c.z + height / 2.0);
            let mut best: Option<f64> = None;
            let mut consider = |t: f64| {
                if t > MIN_T && best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            };
            let ox = o.x - c.x;
            let oy = o.y - c.y;
            let a = d.x * d.x + d.y * d.y;
            if a > 1e-18 {
                let b = ox * d.x + oy * d.y;
                let cc = ox * ox + oy * oy - radius * radius;
                let disc = b * b - a * cc;
                if disc >= 0.0 {
                    let s = disc.sqrt();
                    // numerically stable root pair
                    let q = if b >= 0.0 { -(b + s) } else { -(b - s) };
                    let roots = if q != 0.0 { [q / a, cc / q] } else { [0.0, 0.0] };
                    for t in roots {
                        let z = o.z + t * d.z;
                        if z >= zlo && z <= zhi {
                            consider(t);
                        }
                    }
                }
            }
            if d.z.abs() > 1e-15 {
                for zc in [zlo, zhi] {
                    let t = (zc - o.z) / d.z;
                    let x = ox + t * d.x;
                    let y = oy + t * d.y;
                    if x * x + y * y <= radius * radius {
                        consider(t);
                    }
                }
            }
            best
        }
    }
}

/// Casts one ray per pixel and keeps the nearest hit within range.
pub fn cast_hits(
    objects: &[SceneObject],
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    max_range: f64,
) -> Vec<Option<Hit>> {
    let w = intr.width as usize;
    let origin = Point3::from(pose.translation.vector);
    let mut out = vec![None; w * intr.height as usize];
    out.par_chunks_mut(w.max(1))
        .enumerate()
        .for_each(|(v, row)| {
            for (u, px) in row.iter_mut().enumerate() {
                let dc = pixel_ray(intr, u as f64, v as f64);
                let dw = pose.rotation * dc;
                let mut best: Option<Hit> = None;
                for (i, obj) in objects.iter().enumerate() {
                    if let Some(t) = intersect(obj, &origin, &dw) {
                        if t <= max_range && best.is_none_or(|b| t < b.depth) {
                            best = Some(Hit {
                                object: i,
                                depth: t,
                                world: origin + dw * t,
                            });
                        }
                    }
                }
                *px = best;
            }
        });
    out
}

pub fn render_depth(
    objects: &[SceneObject],
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    settings: &RenderSettings,
) -> DepthFrame {
    let samples = cast_hits(objects, pose, intr, settings.max_range)
        .into_iter()
        .map(|h| match h {
            Some(h) if settings.quantize_mm => (h.depth * 1000.0).round() / 1000.0,
            Some(h) => h.depth,
            None => 0.0,
        })
        .collect();
    DepthFrame {
        intrinsics: *intr,
        samples,
        timestamp: 0.0,
    }
}
