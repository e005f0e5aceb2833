mod common;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use teletwin_core::detection::{Detection, Part};
use teletwin_core::mask::Mask;
use teletwin_core::pose::*;
use teletwin_core::sim::*;

struct Setup {
    scene: Scene,
    tube: SceneObject,
}

fn setup() -> Setup {
    let scene = Scene::default_tube_scene();
    let tube = scene.target_object().unwrap().clone();
    Setup { scene, tube }
}

fn geometry(off: f64) -> ObjectGeometry {
    ObjectGeometry {
        height: 0.115,
        surface_offset: off,
    }
}

fn estimate(s: &Setup, pose: &CameraPose, mode: EstimateMode, part: Part, off: f64) -> Vector3<f64> {
    let intr = s.scene.camera.intrinsics;
    let frame = render_depth(&s.scene.objects, pose, &intr, &s.scene.render_settings());
    let dmode = if part == Part::Full { DetectMode::Full } else { DetectMode::Halves };
    let det = oracle_detect(&s.scene.objects, pose, &intr, 4.0, dmode)
        .into_iter()
        .find(|d| d.part == part)
        .expect("tube visible");
    let bounds = WorkspaceBounds::default();
    let p = EstimateParams {
        mode,
        bounds: &bounds,
        intrinsics: &intr,
        camera_pose: pose,
    };
    estimate_object(&det, &frame, &geometry(off), &p).unwrap().center
}

fn frontal(s: &Setup, dist: f64) -> CameraPose {
    let eye = s.tube.position + Vector3::new(0.0, dist, 0.0);
    look_at(&eye, &s.tube.position).unwrap()
}

#[test]
fn frontal_cylinder_lateral_error_below_half_radius() {
    let s = setup();
    let pose = frontal(&s, 0.4);
    for mode in [EstimateMode::Bbox, EstimateMode::Mask] {
        let c = estimate(&s, &pose, mode, Part::Full, 0.0);
        let cam = pose.inverse_transform_point(&c.into());
        let truth = pose.inverse_transform_point(&s.tube.position.into());
        assert!((cam.x - truth.x).hypot(cam.y - truth.y) < 0.0075, "{mode:?}");
        // without the offset the depth sits on the near surface, in front of the axis
        assert!(cam.z < truth.z && cam.z > truth.z - 0.015);
    }
}

#[test]
fn radius_offset_moves_estimate_onto_axis() {
    let s = setup();
    let pose = frontal(&s, 0.4);
    let raw = (estimate(&s, &pose, EstimateMode::Mask, Part::Full, 0.0) - s.tube.position).norm();
    let fixed = (estimate(&s, &pose, EstimateMode::Mask, Part::Full, 0.015) - s.tube.position).norm();
    assert!(fixed < raw);
    assert!(fixed < 0.005);
}

#[test]
fn mask_pixels_subset_of_bbox_pixels() {
    let s = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pose = common::elevated_view(&mut rng, &s.tube.position, 0.3, 0.8);
    let intr = s.scene.camera.intrinsics;
    let frame = render_depth(&s.scene.objects, &pose, &intr, &s.scene.render_settings());
    let det = &oracle_detect(&s.scene.objects, &pose, &intr, 4.0, DetectMode::Full)[0];
    let b = WorkspaceBounds::default();
    let m = filter_pixels(&frame, Region::of(det, EstimateMode::Mask), &b).unwrap();
    let r = filter_pixels(&frame, Region::of(det, EstimateMode::Bbox), &b).unwrap();
    assert!(m.len() < r.len());
    assert!(m.iter().all(|p| r.contains(p)));
    // background inside the bbox is farther than the tube
    assert!(average_distance(&m).unwrap() < average_distance(&r).unwrap());
}

#[test]
fn level_views_meet_center_tolerances() {
    let s = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let pose = common::level_view(&mut rng, &s.tube.position, 0.3, 0.8);
        let m = estimate(&s, &pose, EstimateMode::Mask, Part::Full, 0.015);
        let b = estimate(&s, &pose, EstimateMode::Bbox, Part::Full, 0.015);
        assert!((m - s.tube.position).norm() <= 0.012);
        assert!((b - s.tube.position).norm() <= 0.020);
    }
}

#[test]
fn elevated_views_mask_mode_within_tolerance() {
    let s = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..30 {
        let pose = common::elevated_view(&mut rng, &s.tube.position, 0.3, 0.8);
        let m = estimate(&s, &pose, EstimateMode::Mask, Part::Full, 0.015);
        assert!((m - s.tube.position).norm() <= 0.012);
    }
}

#[test]
fn halves_agree_with_full_after_correction() {
    let s = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let pose = common::level_view(&mut rng, &s.tube.position, 0.3, 0.8);
        let full = estimate(&s, &pose, EstimateMode::Mask, Part::Full, 0.015);
        for part in [Part::Top, Part::Bottom] {
            let h = estimate(&s, &pose, EstimateMode::Mask, part, 0.015);
            assert!((h - full).norm() <= 0.005, "{part}");
        }
    }
}

#[test]
fn all_invalid_depth_is_empty_region() {
    let intr = CameraIntrinsics::default();
    let frame = DepthFrame::new(intr, vec![0.0; 640 * 480], 0.0).unwrap();
    let m = Mask::from_fn(640, 480, |x, y| (300..310).contains(&x) && (200..240).contains(&y));
    let det = Detection::from_frame_mask(teletwin_core::classes::ObjectClass::Swab, 1.0, Part::Full, &m).unwrap();
    let bounds = WorkspaceBounds::default();
    let pose = CameraPose::identity();
    let p = EstimateParams {
        mode: EstimateMode::Mask,
        bounds: &bounds,
        intrinsics: &intr,
        camera_pose: &pose,
    };
    assert_eq!(
        estimate_center(&det, &frame, &geometry(0.0), &p),
        Err(PoseError::EmptyRegion)
    );
}

#[test]
fn workspace_box_rejects_estimates() {
    let s = setup();
    let pose = frontal(&s, 0.4);
    let intr = s.scene.camera.intrinsics;
    let frame = render_depth(&s.scene.objects, &pose, &intr, &s.scene.render_settings());
    let det = &oracle_detect(&s.scene.objects, &pose, &intr, 4.0, DetectMode::Full)[0];
    let bounds = WorkspaceBounds::default()
        .with_aabb(Aabb {
            min: Vector3::new(-1.0, -0.3, 0.0),
            max: Vector3::new(1.0, 1.0, 1.0),
        })
        .unwrap();
    let p = EstimateParams {
        mode: EstimateMode::Mask,
        bounds: &bounds,
        intrinsics: &intr,
        camera_pose: &pose,
    };
    assert!(matches!(
        estimate_object(det, &frame, &geometry(0.015), &p),
        Err(PoseError::OutsideWorkspace(_))
    ));
}
