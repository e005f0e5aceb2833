use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use teletwin_core::dataset::{synthesize, Assets};
use teletwin_core::pose::{estimate_center, EstimateMode, EstimateParams, ObjectGeometry, WorkspaceBounds};
use teletwin_core::sim::{oracle_detect, DetectMode, Scene};

fn perception(c: &mut Criterion) {
    let scene = Scene::default_tube_scene();
    let ee = scene.home_pose();
    let pose = scene.camera_pose(&ee);
    let cam = &scene.camera;
    let frame = scene.render_from(&ee);
    let dets = oracle_detect(&scene.objects, &pose, &cam.intrinsics, cam.max_range, DetectMode::Full);
    let bounds = WorkspaceBounds::default();
    let geom = ObjectGeometry {
        height: 0.115,
        surface_offset: 0.015,
    };

    c.bench_function("render_depth_640x480", |b| b.iter(|| scene.render_from(black_box(&ee))));
    c.bench_function("oracle_detect", |b| {
        b.iter(|| oracle_detect(&scene.objects, black_box(&pose), &cam.intrinsics, cam.max_range, DetectMode::Full))
    });
    for mode in [EstimateMode::Bbox, EstimateMode::Mask] {
        let params = EstimateParams {
            mode,
            bounds: &bounds,
            intrinsics: &cam.intrinsics,
            camera_pose: &pose,
        };
        c.bench_function(&format!("estimate_center_{mode:?}").to_lowercase(), |b| {
            b.iter(|| estimate_center(black_box(&dets[0]), &frame, &geom, &params))
        });
    }

    let assets = Assets::procedural(512);
    let mut g = c.benchmark_group("synth");
    g.sample_size(10);
    g.bench_function("compose_8_images", |b| b.iter(|| synthesize(&assets, 8, black_box(1))));
    g.finish();
}

criterion_group!(benches, perception);
criterion_main!(benches);
