//! Object center estimation from a detection and a depth frame, plus the
//! alpha filter used to smooth successive estimates.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classes::ObjectClass;
use crate::detection::{Detection, Part};
use crate::mask::{Mask, PixelRect};
use crate::sim::{CameraIntrinsics, CameraPose, DepthFrame};

pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_D_MIN: f64 = 0.15;
pub const DEFAULT_D_MAX: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("no valid depth pixels in region")]
    EmptyRegion,
    #[error("invalid depth {0}")]
    InvalidDepth(f64),
    #[error("invalid workspace bounds: {0}")]
    InvalidBounds(String),
    #[error("alpha {0} outside (0, 1]")]
    InvalidAlpha(f64),
    #[error("region does not fit the frame")]
    RegionOutOfFrame,
    #[error("estimate {0:?} outside the workspace box")]
    OutsideWorkspace([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceBounds {
    d_min: f64,
    d_max: f64,
    aabb: Option<Aabb>,
}

impl WorkspaceBounds {
    pub fn new(d_min: f64, d_max: f64) -> Result<Self, PoseError> {
        if !(d_min > 0.0 && d_min < d_max && d_max.is_finite()) {
            return Err(PoseError::InvalidBounds(format!("[{d_min}, {d_max}]")));
        }
        Ok(WorkspaceBounds {
            d_min,
            d_max,
            aabb: None,
        })
    }

    pub fn with_aabb(mut self, aabb: Aabb) -> Result<Self, PoseError> {
        if (0..3).any(|i| !(aabb.min[i] <= aabb.max[i])) {
            return Err(PoseError::InvalidBounds("box min exceeds max".into()));
        }
        self.aabb = Some(aabb);
        Ok(self)
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn aabb(&self) -> Option<&Aabb> {
        self.aabb.as_ref()
    }
}

impl Default for WorkspaceBounds {
    fn default() -> Self {
        WorkspaceBounds {
            d_min: DEFAULT_D_MIN,
            d_max: DEFAULT_D_MAX,
            aabb: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateMode {
    Bbox,
    Mask,
}

impl std::str::FromStr for EstimateMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bbox" => Ok(EstimateMode::Bbox),
            "mask" => Ok(EstimateMode::Mask),
            other => Err(format!("unknown estimate mode `{other}`")),
        }
    }
}

/// Pixels considered for depth averaging.
#[derive(Debug, Clone, Copy)]
pub enum Region<'a> {
    Rect(PixelRect),
    /// A bbox-local mask placed at `bbox`.
    Mask { bbox: PixelRect, mask: &'a Mask },
}

impl<'a> Region<'a> {
    pub fn of(det: &'a Detection, mode: EstimateMode) -> Self {
        match mode {
            EstimateMode::Bbox => Region::Rect(det.bbox),
            EstimateMode::Mask => Region::Mask {
                bbox: det.bbox,
                mask: &det.mask,
            },
        }
    }

    fn bbox(&self) -> PixelRect {
        match self {
            Region::Rect(r) => *r,
            Region::Mask { bbox, .. } => *bbox,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthPixel {
    pub u: u32,
    pub v: u32,
    pub depth: f64,
}

/// Pixels of `region` whose depth lies in `[d_min, d_max]`, row-major.
pub fn filter_pixels(
    frame: &DepthFrame,
    region: Region<'_>,
    bounds: &WorkspaceBounds,
) -> Result<Vec<DepthPixel>, PoseError> {
    let b = region.bbox();
    if !b.fits_in(frame.width(), frame.height()) {
        return Err(PoseError::RegionOutOfFrame);
    }
    let mut out = Vec::new();
    for y in 0..b.h {
        for x in 0..b.w {
            if let Region::Mask { mask, .. } = region {
                if !mask.get(x, y) {
                    continue;
                }
            }
            let (u, v) = (b.x + x, b.y + y);
            let depth = frame.get(u, v);
            if depth >= bounds.d_min && depth <= bounds.d_max {
                out.push(DepthPixel { u, v, depth });
            }
        }
    }
    Ok(out)
}

pub fn average_distance(pixels: &[DepthPixel]) -> Result<f64, PoseError> {
    if pixels.is_empty() {
        return Err(PoseError::EmptyRegion);
    }
    let sum: f64 = pixels.iter().map(|p| p.depth).sum();
    let mean = sum / pixels.len() as f64;
    // summation rounding must not leave the sample range
    let (lo, hi) = pixels
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.depth), hi.max(p.depth))
        });
    Ok(mean.clamp(lo, hi))
}

pub fn deproject(u: f64, v: f64, depth: f64, intr: &CameraIntrinsics) -> Result<Vector3<f64>, PoseError> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(PoseError::InvalidDepth(depth));
    }
    Ok(Vector3::new(
        (u - intr.cx) * depth / intr.fx,
        (v - intr.cy) * depth / intr.fy,
        depth,
    ))
}

pub fn project(p: &Vector3<f64>, intr: &CameraIntrinsics) -> Result<(f64, f64), PoseError> {
    if !(p.z > 0.0) {
        return Err(PoseError::InvalidDepth(p.z));
    }
    Ok(intr.project(p))
}

pub fn camera_to_world(p: &Vector3<f64>, pose: &CameraPose) -> Vector3<f64> {
    pose.transform_point(&(*p).into()).coords
}

pub fn world_to_camera(p: &Vector3<f64>, pose: &CameraPose) -> Vector3<f64> {
    pose.inverse_transform_point(&(*p).into()).coords
}

/// Per-object geometry needed to turn a surface measurement into a center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectGeometry {
    pub height: f64,
    /// Forward offset along the viewing ray; the cylinder radius when the
    /// near-surface correction is on, zero otherwise.
    pub surface_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateParams<'a> {
    pub mode: EstimateMode,
    pub bounds: &'a WorkspaceBounds,
    pub intrinsics: &'a CameraIntrinsics,
    pub camera_pose: &'a CameraPose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectEstimate {
    pub class: ObjectClass,
    /// World frame, meters.
    pub center: Vector3<f64>,
    pub source: EstimateMode,
    pub pixel_count: usize,
    pub timestamp: f64,
}

fn reference_pixel(det: &Detection, mode: EstimateMode) -> Result<(f64, f64), PoseError> {
    match mode {
        EstimateMode::Bbox => Ok(det.bbox.center()),
        EstimateMode::Mask => {
            let (cx, cy) = det.mask.centroid().ok_or(PoseError::EmptyRegion)?;
            Ok((
                (det.bbox.x as f64 + cx).round(),
                (det.bbox.y as f64 + cy).round(),
            ))
        }
    }
}

/// Camera-frame center of the detected object.
pub fn estimate_center(
    det: &Detection,
    frame: &DepthFrame,
    geom: &ObjectGeometry,
    params: &EstimateParams<'_>,
) -> Result<(Vector3<f64>, usize), PoseError> {
    let pixels = filter_pixels(frame, Region::of(det, params.mode), params.bounds)?;
    let depth = average_distance(&pixels)?;
    let (u, v) = reference_pixel(det, params.mode)?;
    let mut c = deproject(u, v, depth, params.intrinsics)?;
    if geom.surface_offset != 0.0 {
        c += c.normalize() * geom.surface_offset;
    }
    let up = params.camera_pose.rotation.inverse() * Vector3::z();
    match det.part {
        Part::Full => {}
        Part::Top => c -= up * (geom.height / 4.0),
        Part::Bottom => c += up * (geom.height / 4.0),
    }
    Ok((c, pixels.len()))
}

/// World-frame estimate, rejected if it falls outside the workspace box.
pub fn estimate_object(
    det: &Detection,
    frame: &DepthFrame,
    geom: &ObjectGeometry,
    params: &EstimateParams<'_>,
) -> Result<ObjectEstimate, PoseError> {
    let (c, n) = estimate_center(det, frame, geom, params)?;
    let center = camera_to_world(&c, params.camera_pose);
    if let Some(b) = params.bounds.aabb() {
        if !b.contains(&center) {
            return Err(PoseError::OutsideWorkspace(center.into()));
        }
    }
    Ok(ObjectEstimate {
        class: det.class,
        center,
        source: params.mode,
        pixel_count: n,
        timestamp: frame.timestamp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaFilterState {
    alpha: f64,
    value: Option<Vector3<f64>>,
}

impl AlphaFilterState {
    pub fn new(alpha: f64) -> Result<Self, PoseError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(PoseError::InvalidAlpha(alpha));
        }
        Ok(AlphaFilterState { alpha, value: None })
    }

    pub fn with_value(alpha: f64, value: Vector3<f64>) -> Result<Self, PoseError> {
        let mut s = Self::new(alpha)?;
        s.value = Some(value);
        Ok(s)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn value(&self) -> Option<Vector3<f64>> {
        self.value
    }
}

impl Default for AlphaFilterState {
    fn default() -> Self {
        AlphaFilterState {
            alpha: DEFAULT_ALPHA,
            value: None,
        }
    }
}

pub fn alpha_update(state: &AlphaFilterState, sample: &Vector3<f64>) -> (AlphaFilterState, Vector3<f64>) {
    let value = match state.value {
        None => *sample,
        Some(prev) => sample * state.alpha + prev * (1.0 - state.alpha),
    };
    (
        AlphaFilterState {
            alpha: state.alpha,
            value: Some(value),
        },
        value,
    )
}
