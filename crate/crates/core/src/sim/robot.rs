//! Simulated arm and parallel gripper executing end-effector targets.

use nalgebra::{Isometry3, Vector3};
use serde::{Deserialize, Serialize};

use crate::control::EeTarget;
use crate::kinematics::{
    forward_kinematics, inverse_kinematics, select_solution, wrap_angle, EePose, JointConfig,
    SelectionWeights,
};

use super::scene::{Scene, Shape};

/// Joint changes below this are treated as "already there".
const JOINT_DEADBAND: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldObject {
    pub id: u32,
    /// Object position expressed in the tool frame.
    pub offset: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub joints: JointConfig,
    pub ee: EePose,
    pub gripper_fraction: f64,
    pub held: Option<HeldObject>,
    pub tick: u64,
    /// A grasp already happened during the current close command.
    pub grasped_this_cycle: bool,
}

impl RobotState {
    pub fn at_home(scene: &Scene) -> Self {
        RobotState {
            joints: scene.home,
            ee: forward_kinematics(&scene.model, &scene.home),
            gripper_fraction: 0.0,
            held: None,
            tick: 0,
            grasped_this_cycle: false,
        }
    }

    pub fn held_object(&self) -> Option<u32> {
        self.held.map(|h| h.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimEvent {
    Grasp {
        object: u32,
        /// Surface point of the object at the gripper's approach side.
        point: Vector3<f64>,
    },
    Release {
        object: u32,
    },
    IkUnreachable,
}

/// Finger contact points for a tool pose and closed fraction. Fingers close
/// along the tool x axis.
pub fn finger_points(ee: &EePose, fraction: f64, max_opening: f64) -> [Vector3<f64>; 2] {
    let half = max_opening * (1.0 - fraction) / 2.0;
    let x = ee.orientation * Vector3::x();
    [ee.position + x * half, ee.position - x * half]
}

/// Advances the simulation by `dt` seconds toward `target`.
///
/// The arm moves toward the weighted-least-squares IK branch with each joint
/// capped at `scene.joint_speed_cap`; the gripper fraction slews toward the
/// command and stops at contact. A held object follows the tool rigidly.
pub fn step(
    scene: &mut Scene,
    state: &RobotState,
    target: &EeTarget,
    dt: f64,
    weights: &SelectionWeights,
) -> (RobotState, Vec<SimEvent>) {
    let mut events = Vec::new();
    let mut next = state.clone();
    next.tick = state.tick + 1;

    let goal = EePose::new(target.position, target.orientation);
    match inverse_kinematics(&scene.model, &goal) {
        Ok(sols) => {
            let chosen = select_solution(&sols.configs, &state.joints, weights)
                .expect("IK returned at least one solution");
            let cap = scene.joint_speed_cap * dt;
            let mut q = state.joints.0;
            for (i, qi) in q.iter_mut().enumerate() {
                let delta = wrap_angle(chosen.0[i] - *qi);
                if delta.abs() <= JOINT_DEADBAND {
                    continue;
                }
                let moved = *qi + delta.clamp(-cap, cap);
                let lim = scene.model.limits[i];
                *qi = [moved, moved - std::f64::consts::TAU, moved + std::f64::consts::TAU]
                    .into_iter()
                    .find(|x| lim.contains(*x))
                    .unwrap_or(*qi);
            }
            next.joints = JointConfig(q);
            next.ee = forward_kinematics(&scene.model, &next.joints);
        }
        Err(_) => events.push(SimEvent::IkUnreachable),
    }

    let gp = scene.gripper;
    let closing = target.gripper_closed();
    if !closing {
        next.grasped_this_cycle = false;
        if let Some(h) = next.held.take() {
            events.push(SimEvent::Release { object: h.id });
        }
    }
    let slew = gp.speed * dt;
    let desired = target.gripper.clamp(0.0, 1.0);
    if next.held.is_none() {
        let f = next.gripper_fraction;
        next.gripper_fraction = f + (desired - f).clamp(-slew, slew);
    }

    if closing && next.held.is_none() && !next.grasped_this_cycle {
        let fingers = finger_points(&next.ee, next.gripper_fraction, gp.max_opening);
        let contact = scene.objects.iter().find(|o| {
            matches!(o.shape, Shape::Cylinder { .. })
                && o.class.is_some()
                && fingers.iter().all(|p| {
                    o.cylinder_surface_distance(p)
                        .is_some_and(|d| d <= gp.contact_tolerance)
                })
        });
        if let Some(obj) = contact {
            let Shape::Cylinder { radius, .. } = obj.shape else {
                unreachable!()
            };
            let approach = -(next.ee.orientation * Vector3::z());
            let horiz = Vector3::new(approach.x, approach.y, 0.0);
            let dir = if horiz.norm() > 1e-12 {
                horiz.normalize()
            } else {
                Vector3::x()
            };
            let axis_point = Vector3::new(obj.position.x, obj.position.y, next.ee.position.z);
            let point = axis_point + dir * radius;
            let offset = next.ee.to_isometry().inverse_transform_vector(&(obj.position - next.ee.position));
            next.held = Some(HeldObject {
                id: obj.id,
                offset,
            });
            next.grasped_this_cycle = true;
            events.push(SimEvent::Grasp {
                object: obj.id,
                point,
            });
        }
    }

    if let Some(h) = next.held {
        let iso: Isometry3<f64> = next.ee.to_isometry();
        if let Some(obj) = scene.object_mut(h.id) {
            // upright objects keep their orientation; only the center follows
            obj.position = next.ee.position + iso.rotation * h.offset;
        }
    }

    (next, events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target_at(state: &RobotState, gripper: f64) -> EeTarget {
        EeTarget {
            position: state.ee.position,
            gripper,
            orientation: state.ee.orientation,
        }
    }

    #[test]
    fn holding_target_is_fixed_point() {
        let mut scene = Scene::default_tube_scene();
        let s0 = RobotState::at_home(&scene);
        let (s1, ev) = step(&mut scene, &s0, &target_at(&s0, 0.0), 0.02, &SelectionWeights::default());
        assert!(ev.is_empty());
        assert_eq!(s1.tick, 1);
        assert_eq!(s1.joints, s0.joints);
        assert_eq!(s1.ee, s0.ee);
        assert_eq!(s1.gripper_fraction, 0.0);
    }

    #[test]
    fn unreachable_target_holds_pose() {
        let mut scene = Scene::default_tube_scene();
        let s0 = RobotState::at_home(&scene);
        let mut t = target_at(&s0, 0.0);
        t.position = Vector3::new(2.0, 2.0, 2.0);
        let (s1, ev) = step(&mut scene, &s0, &t, 0.02, &SelectionWeights::default());
        assert_eq!(ev, vec![SimEvent::IkUnreachable]);
        assert_eq!(s1.joints, s0.joints);
    }

    #[test]
    fn speed_cap_respected() {
        let mut scene = Scene::default_tube_scene();
        let s0 = RobotState::at_home(&scene);
        let mut t = target_at(&s0, 0.0);
        t.position += Vector3::new(0.0, -0.3, 0.1);
        let (s1, _) = step(&mut scene, &s0, &t, 0.02, &SelectionWeights::default());
        for i in 0..6 {
            assert!((s1.joints.0[i] - s0.joints.0[i]).abs() <= scene.joint_speed_cap * 0.02 + 1e-9);
        }
        assert_eq!(s1.ee, forward_kinematics(&scene.model, &s1.joints));
    }

    #[test]
    fn closing_on_tube_grasps_once_then_releases() {
        let mut scene = Scene::default_tube_scene();
        let tube = scene.target_object().unwrap().clone();
        let mut s = RobotState::at_home(&scene);
        let w = SelectionWeights::default();
        // teleport to the tube axis at mid-height
        let mut t = target_at(&s, 0.0);
        t.position = tube.position;
        for _ in 0..200 {
            s = step(&mut scene, &s, &t, 0.02, &w).0;
        }
        assert!((s.ee.position - tube.position).norm() < 1e-9);
        let mut grasps = Vec::new();
        t.gripper = 1.0;
        for _ in 0..100 {
            let (n, ev) = step(&mut scene, &s, &t, 0.02, &w);
            s = n;
            grasps.extend(ev.into_iter().filter(|e| matches!(e, SimEvent::Grasp { .. })));
        }
        assert_eq!(grasps.len(), 1);
        assert_eq!(s.held_object(), Some(tube.id));
        // geometric oracle: both fingers within tolerance of the tube wall
        let opening = 0.085 * (1.0 - s.gripper_fraction);
        assert!((opening / 2.0 - 0.015).abs() <= 0.003);
        if let SimEvent::Grasp { point, .. } = &grasps[0] {
            assert!((point - tube.grasp_mark.unwrap()).norm() < 1e-9);
        }
        // held object follows the tool
        t.position.z += 0.05;
        for _ in 0..50 {
            s = step(&mut scene, &s, &t, 0.02, &w).0;
        }
        let moved = scene.object(tube.id).unwrap().position;
        assert!((moved - (tube.position + Vector3::new(0.0, 0.0, 0.05))).norm() < 1e-9);
        t.gripper = 0.0;
        let (_, ev) = step(&mut scene, &s, &t, 0.02, &w);
        assert_eq!(ev, vec![SimEvent::Release { object: tube.id }]);
    }

    #[test]
    fn closing_in_free_space_does_not_grasp() {
        let mut scene = Scene::default_tube_scene();
        let mut s = RobotState::at_home(&scene);
        let t = target_at(&s, 1.0);
        for _ in 0..60 {
            let (n, ev) = step(&mut scene, &s, &t, 0.02, &SelectionWeights::default());
            assert!(ev.is_empty());
            s = n;
        }
        assert_eq!(s.gripper_fraction, 1.0);
        assert!(s.held.is_none());
    }
}
