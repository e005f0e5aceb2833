//! Simulated remote site: analytic scene, ray-cast depth camera, oracle
//! detector and the arm/gripper model.

mod detect;
mod render;
mod robot;
mod scene;

pub use detect::{oracle_detect, DetectMode};
pub use render::{
    cast_hits, intersect, pixel_ray, read_depth_frame, render_depth, write_depth_frame, DepthFrame,
    DepthIoError, Hit, RenderSettings,
};
pub use robot::{finger_points, step, HeldObject, RobotState, SimEvent};
pub use scene::{
    load_scene, parse_scene, CameraIntrinsics, CameraPose, CameraSetup, GripperParams, Scene,
    SceneError, SceneObject, Shape, DEFAULT_SCENE,
};

impl Scene {
    pub fn render_settings(&self) -> RenderSettings {
        RenderSettings {
            max_range: self.camera.max_range,
            quantize_mm: self.camera.quantize_mm,
        }
    }

    /// Depth frame from the tool-mounted camera at the given tool pose.
    pub fn render_from(&self, ee: &crate::kinematics::EePose) -> DepthFrame {
        render_depth(
            &self.objects,
            &self.camera_pose(ee),
            &self.camera.intrinsics,
            &self.render_settings(),
        )
    }
}

/// Camera pose at `eye` with the optical axis through `target` and image
/// rows aligned with the world horizontal. `None` when looking straight up
/// or down, or when `eye == target`.
pub fn look_at(eye: &nalgebra::Vector3<f64>, target: &nalgebra::Vector3<f64>) -> Option<CameraPose> {
    use nalgebra::{Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};
    let z = (target - eye).try_normalize(1e-12)?;
    let x = z.cross(&Vector3::z()).try_normalize(1e-9)?;
    let y = z.cross(&x);
    let r = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
    Some(CameraPose::from_parts(
        Translation3::from(*eye),
        UnitQuaternion::from_rotation_matrix(&r),
    ))
}
