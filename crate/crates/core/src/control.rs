//! Haptic-to-robot workspace mapping: integer scaling, axis locks, frame
//! rotation and radial clamping onto the robot workspace sphere.

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Haptic handle workspace radius, meters.
pub const HAPTIC_RADIUS: f64 = 0.160;
/// Robot workspace radius used for clamping, meters.
pub const ROBOT_RADIUS: f64 = 0.500;
/// Gripper fractions at or above this value count as "closed".
pub const GRIPPER_CLOSED_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("scale {0} is not one of 1, 2, 3, 4, 5")]
    InvalidScale(i64),
    #[error("at most two translational axes may be locked")]
    TooManyLocks,
    #[error("frame rotation is not orthonormal")]
    InvalidRotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HapticSample {
    /// Handle position in the haptic frame, meters.
    pub position: Vector3<f64>,
    /// Closed fraction, 0 = open, 1 = closed.
    pub gripper: f64,
    /// Monotonic seconds.
    pub timestamp: f64,
}

impl HapticSample {
    /// Projects the handle position onto the haptic workspace ball.
    pub fn clamped(mut self) -> Self {
        let n = self.position.norm();
        if n > HAPTIC_RADIUS {
            self.position *= HAPTIC_RADIUS / n;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    scale: u8,
    axis_locks: [bool; 3],
    frame_rotation: Rotation3<f64>,
    pub workspace_center: Vector3<f64>,
    pub robot_radius: f64,
    /// Fixed tool orientation carried by every target.
    pub orientation: Rotation3<f64>,
}

impl ControlConfig {
    pub fn new(workspace_center: Vector3<f64>, orientation: Rotation3<f64>) -> Self {
        ControlConfig {
            scale: 1,
            axis_locks: [false; 3],
            frame_rotation: Rotation3::identity(),
            workspace_center,
            robot_radius: ROBOT_RADIUS,
            orientation,
        }
    }

    pub fn scale(&self) -> u8 {
        self.scale
    }

    pub fn axis_locks(&self) -> [bool; 3] {
        self.axis_locks
    }

    pub fn frame_rotation(&self) -> &Rotation3<f64> {
        &self.frame_rotation
    }

    pub fn with_frame_rotation(mut self, r: Rotation3<f64>) -> Result<Self, ControlError> {
        let m = r.matrix();
        let err = (m.transpose() * m - nalgebra::Matrix3::identity()).abs().max();
        if err > 1e-9 || (m.determinant() - 1.0).abs() > 1e-9 {
            return Err(ControlError::InvalidRotation);
        }
        self.frame_rotation = r;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EeTarget {
    pub position: Vector3<f64>,
    pub gripper: f64,
    pub orientation: Rotation3<f64>,
}

impl EeTarget {
    pub fn gripper_closed(&self) -> bool {
        self.gripper >= GRIPPER_CLOSED_THRESHOLD
    }
}

pub fn set_scale(cfg: &ControlConfig, s: i64) -> Result<ControlConfig, ControlError> {
    if !(1..=5).contains(&s) {
        return Err(ControlError::InvalidScale(s));
    }
    Ok(ControlConfig {
        scale: s as u8,
        ..*cfg
    })
}

pub fn set_axis_locks(cfg: &ControlConfig, locks: [bool; 3]) -> Result<ControlConfig, ControlError> {
    if locks.iter().all(|l| *l) {
        return Err(ControlError::TooManyLocks);
    }
    Ok(ControlConfig {
        axis_locks: locks,
        ..*cfg
    })
}

/// Maps a haptic sample to a robot end-effector target.
///
/// Unlocked axes follow `center + scale * R * x`; locked axes keep the
/// previous target's coordinate. The result is then projected radially onto
/// the workspace sphere if it lies outside. Non-finite coordinates are
/// treated like locked ones.
pub fn map_sample(sample: &HapticSample, cfg: &ControlConfig, prev: &EeTarget) -> EeTarget {
    let raw = cfg.workspace_center + cfg.frame_rotation * sample.position * f64::from(cfg.scale);
    let mut p = raw;
    for axis in 0..3 {
        if cfg.axis_locks[axis] || !raw[axis].is_finite() {
            p[axis] = prev.position[axis];
        }
    }
    let offset = p - cfg.workspace_center;
    let n = offset.norm();
    if !n.is_finite() {
        p = cfg.workspace_center;
    } else if n > cfg.robot_radius {
        p = cfg.workspace_center + offset * (cfg.robot_radius / n);
    }
    let gripper = if sample.gripper.is_finite() {
        sample.gripper.clamp(0.0, 1.0)
    } else {
        prev.gripper
    };
    EeTarget {
        position: p,
        gripper,
        orientation: cfg.orientation,
    }
}
