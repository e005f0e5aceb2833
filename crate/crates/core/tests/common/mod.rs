#![allow(dead_code)]

use nalgebra::Vector3;
use rand::Rng;
use teletwin_core::sim::{look_at, CameraPose};

/// Wrist-camera pose with a level optical axis: eye on the approach side of
/// `target` at horizontal range `r`, height jitter of a few centimeters and a
/// small yaw so the target is not always centered.
pub fn level_view(rng: &mut impl Rng, target: &Vector3<f64>, r_min: f64, r_max: f64) -> CameraPose {
    let r = rng.random_range(r_min..r_max);
    let az: f64 = rng.random_range(0.6..2.5);
    let dz = rng.random_range(-0.04..0.04);
    let eye = target + Vector3::new(r * az.cos(), r * az.sin(), dz);
    let yaw: f64 = rng.random_range(-0.15..0.15);
    let d = target - eye;
    let dir = Vector3::new(
        d.x * yaw.cos() - d.y * yaw.sin(),
        d.x * yaw.sin() + d.y * yaw.cos(),
        0.0,
    );
    look_at(&eye, &(eye + dir)).expect("level view")
}

/// Pose looking down on `target` from elevation up to ~34 degrees.
pub fn elevated_view(rng: &mut impl Rng, target: &Vector3<f64>, r_min: f64, r_max: f64) -> CameraPose {
    let r = rng.random_range(r_min..r_max);
    let az: f64 = rng.random_range(0.6..2.5);
    let el: f64 = rng.random_range(-0.1..0.6);
    let eye = target + Vector3::new(r * el.cos() * az.cos(), r * el.cos() * az.sin(), r * el.sin());
    let jitter = Vector3::new(
        rng.random_range(-0.03..0.03),
        rng.random_range(-0.03..0.03),
        rng.random_range(-0.03..0.03),
    );
    look_at(&eye, &(target + jitter)).expect("elevated view")
}

use std::net::SocketAddr;
use teletwin_core::protocol::{ControlMsg, Role, ServerMsg};
use teletwin_core::server::TcpClient;

/// Drives the arm from home straight to `goal` in haptic coordinates at
/// `scale`, advancing one waypoint each time the arm has reached the last,
/// then closes the gripper and waits for the grasp. Returns the commanded
/// path length in meters.
pub fn scripted_grasp(addr: SocketAddr, goal: Vector3<f64>, scale: i64, steps: usize) -> f64 {
    let mut c = TcpClient::connect(addr).expect("connect");
    match c.recv().expect("hello") {
        Some(ServerMsg::Hello { role, .. }) => assert_eq!(role, Role::Operator),
        other => panic!("expected hello, got {other:?}"),
    }
    let mut home = None;
    let mut k = 0usize;
    let mut closing_ticks = 0;
    loop {
        let Some(msg) = c.recv().expect("recv") else { panic!("server closed early") };
        let ServerMsg::State { msg: s, .. } = msg else { continue };
        if s.events.iter().any(|e| matches!(e, teletwin_core::sim::SimEvent::Grasp { .. })) {
            break;
        }
        let ee = Vector3::from(s.ee);
        let home = *home.get_or_insert(ee);
        let waypoint = |k: usize| goal * (k as f64 / steps as f64);
        let reached = (ee - (home + waypoint(k) * scale as f64)).norm() < 1e-9;
        if k < steps {
            if !reached && k > 0 {
                continue;
            }
            k += 1;
        } else {
            closing_ticks += 1;
            assert!(closing_ticks < 500, "grasp never happened");
        }
        let gripper = if k == steps && reached { 1.0 } else { 0.0 };
        c.send(&ControlMsg {
            position: waypoint(k).into(),
            gripper,
            scale: Some(scale),
            locks: None,
            timestamp: s.time,
        })
        .expect("send");
    }
    (goal * scale as f64).norm()
}
