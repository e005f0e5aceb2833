//! Scene description: analytic primitives, the depth camera and the robot
//! setup, loaded from a TOML scene file.

use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classes::ObjectClass;
use crate::kinematics::{
    forward_kinematics, load_robot_config, DhModel, EePose, JointConfig, RobotConfigError,
};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("reading scene {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing scene: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("robot config: {0}")]
    Robot(#[from] RobotConfigError),
    #[error("invalid scene: {0}")]
    Invalid(String),
}

/// Analytic primitive. Positions refer to [`SceneObject::position`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// Upright cylinder centered at the object position.
    Cylinder { radius: f64, height: f64 },
    /// World-axis-aligned box centered at the object position.
    Box { half_extents: [f64; 3] },
    /// Infinite plane through the object position.
    Plane { normal: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u32,
    /// Background geometry (tables, walls) has no class and is never detected.
    #[serde(default)]
    pub class: Option<ObjectClass>,
    pub shape: Shape,
    pub position: Vector3<f64>,
    #[serde(default)]
    pub grasp_mark: Option<Vector3<f64>>,
    #[serde(default)]
    pub upper_color: Option<String>,
    #[serde(default)]
    pub lower_color: Option<String>,
    /// The object the operator is asked to grasp; at most one per scene.
    #[serde(default)]
    pub target: bool,
}

impl SceneObject {
    /// Vertical extent `(bottom, top)`, if bounded.
    pub fn vertical_span(&self) -> Option<(f64, f64)> {
        match self.shape {
            Shape::Cylinder { height, .. } => Some((
                self.position.z - height / 2.0,
                self.position.z + height / 2.0,
            )),
            Shape::Box { half_extents } => Some((
                self.position.z - half_extents[2],
                self.position.z + half_extents[2],
            )),
            Shape::Plane { .. } => None,
        }
    }

    pub fn height(&self) -> Option<f64> {
        self.vertical_span().map(|(lo, hi)| hi - lo)
    }

    /// Distance from `p` to the lateral surface of a cylinder, `None` for
    /// other shapes or points outside the cylinder's height.
    pub fn cylinder_surface_distance(&self, p: &Vector3<f64>) -> Option<f64> {
        let Shape::Cylinder { radius, .. } = self.shape else {
            return None;
        };
        let (lo, hi) = self.vertical_span()?;
        if p.z < lo || p.z > hi {
            return None;
        }
        let radial = (p.xy() - self.position.xy()).norm();
        Some((radial - radius).abs())
    }

    fn validate(&self) -> Result<(), String> {
        match self.shape {
            Shape::Cylinder { radius, height } => {
                if !(radius > 0.0 && height > 0.0) {
                    return Err(format!("object {}: cylinder radius and height must be positive", self.id));
                }
            }
            Shape::Box { half_extents } => {
                if half_extents.iter().any(|h| !(*h > 0.0)) {
                    return Err(format!("object {}: box half extents must be positive", self.id));
                }
            }
            Shape::Plane { normal } => {
                if Vector3::from(normal).norm() < 1e-12 {
                    return Err(format!("object {}: plane normal is zero", self.id));
                }
            }
        }
        if let (Some(mark), Shape::Cylinder { .. }) = (self.grasp_mark, self.shape) {
            match self.cylinder_surface_distance(&mark) {
                Some(d) if d <= 1e-6 => {}
                _ => {
                    return Err(format!(
                        "object {}: grasp mark is not on the cylinder surface",
                        self.id
                    ))
                }
            }
        }
        Ok(())
    }
}

/// Pinhole intrinsics; pixel `(u, v)` is centered at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err("focal lengths must be positive".into());
        }
        if !(self.cx >= 0.0 && self.cx < f64::from(self.width)) {
            return Err("cx outside image".into());
        }
        if !(self.cy >= 0.0 && self.cy < f64::from(self.height)) {
            return Err("cy outside image".into());
        }
        Ok(())
    }

    /// Camera-frame point to pixel coordinates.
    pub fn project(&self, p: &Vector3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        CameraIntrinsics {
            width: 640,
            height: 480,
            fx: 600.0,
            fy: 600.0,
            cx: 320.0,
            cy: 240.0,
        }
    }
}

/// Pose of the camera in the world: maps camera-frame points (x right,
/// y down, z forward) to world points.
pub type CameraPose = Isometry3<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct CameraSetup {
    pub intrinsics: CameraIntrinsics,
    /// Camera pose relative to the tool flange.
    pub mount: Isometry3<f64>,
    pub max_range: f64,
    pub quantize_mm: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperParams {
    /// Finger separation when fully open, meters.
    pub max_opening: f64,
    /// Slew rate of the closed fraction, 1/s.
    pub speed: f64,
    pub contact_tolerance: f64,
}

impl Default for GripperParams {
    fn default() -> Self {
        GripperParams {
            max_opening: 0.085,
            speed: 2.0,
            contact_tolerance: 0.003,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub model: DhModel,
    pub home: JointConfig,
    pub camera: CameraSetup,
    pub gripper: GripperParams,
    pub joint_speed_cap: f64,
}

impl Scene {
    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn object_mut(&mut self, id: u32) -> Option<&mut SceneObject> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    pub fn target_object(&self) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.target)
    }

    pub fn home_pose(&self) -> EePose {
        forward_kinematics(&self.model, &self.home)
    }

    /// Camera pose in the world for the given tool pose.
    pub fn camera_pose(&self, ee: &EePose) -> CameraPose {
        let flange = ee.to_isometry()
            * Isometry3::from_parts(
                Translation3::new(0.0, 0.0, -self.model.tool_offset),
                UnitQuaternion::identity(),
            );
        flange * self.camera.mount
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |s: String| SceneError::Invalid(s);
        self.camera.intrinsics.validate().map_err(bad)?;
        for o in &self.objects {
            o.validate().map_err(bad)?;
        }
        let mut ids: Vec<u32> = self.objects.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(bad("duplicate object ids".into()));
        }
        if self.objects.iter().filter(|o| o.target).count() > 1 {
            return Err(bad("more than one target object".into()));
        }
        if !(self.joint_speed_cap > 0.0) {
            return Err(bad("joint speed cap must be positive".into()));
        }
        Ok(())
    }

    /// The default tube-grasping scene: a centrifuge tube on a table in front
    /// of a wall, the tool 0.47 m away at tube-center height.
    pub fn default_tube_scene() -> Scene {
        parse_scene(DEFAULT_SCENE, None).expect("bundled scene is valid")
    }
}

pub const DEFAULT_SCENE: &str = include_str!("../../../../config/scene.toml");

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    robot: RobotSection,
    #[serde(default)]
    camera: CameraSection,
    #[serde(default)]
    gripper: GripperParams,
    #[serde(default)]
    objects: Vec<SceneObject>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotSection {
    /// Robot config path, relative to the scene file. Built-in UR3 if absent.
    config: Option<PathBuf>,
    #[serde(default)]
    tool_offset: f64,
    home: [f64; 6],
    #[serde(default = "default_speed_cap")]
    joint_speed_cap: f64,
}

fn default_speed_cap() -> f64 {
    std::f64::consts::PI
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CameraSection {
    width: u32,
    height: u32,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    /// Translation of the camera in the flange frame, meters.
    offset: [f64; 3],
    /// Roll, pitch, yaw of the camera relative to the flange, radians.
    rpy: [f64; 3],
    max_range: f64,
    quantize_mm: bool,
}

impl Default for CameraSection {
    fn default() -> Self {
        let i = CameraIntrinsics::default();
        CameraSection {
            width: i.width,
            height: i.height,
            fx: i.fx,
            fy: i.fy,
            cx: i.cx,
            cy: i.cy,
            offset: [0.0; 3],
            rpy: [0.0; 3],
            max_range: 4.0,
            quantize_mm: false,
        }
    }
}

/// Parses a scene. `base_dir` resolves a relative robot config path.
pub fn parse_scene(text: &str, base_dir: Option<&Path>) -> Result<Scene, SceneError> {
    let file: SceneFile = toml::from_str(text)?;
    let model = match &file.robot.config {
        Some(p) => {
            let path = match base_dir {
                Some(dir) if p.is_relative() => dir.join(p),
                _ => p.clone(),
            };
            load_robot_config(path)?
        }
        None => DhModel::ur3(),
    }
    .with_tool_offset(file.robot.tool_offset);
    let c = &file.camera;
    let scene = Scene {
        objects: file.objects,
        model,
        home: JointConfig(file.robot.home),
        camera: CameraSetup {
            intrinsics: CameraIntrinsics {
                width: c.width,
                height: c.height,
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
            },
            mount: Isometry3::from_parts(
                Translation3::from(Vector3::from(c.offset)),
                UnitQuaternion::from_euler_angles(c.rpy[0], c.rpy[1], c.rpy[2]),
            ),
            max_range: c.max_range,
            quantize_mm: c.quantize_mm,
        },
        gripper: file.gripper,
        joint_speed_cap: file.robot.joint_speed_cap,
    };
    scene.validate()?;
    Ok(scene)
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scene(&text, path.parent())
}
