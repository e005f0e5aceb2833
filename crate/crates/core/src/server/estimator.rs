//! Background pose-estimation pipeline: render, detect, estimate, smooth.

use crossbeam_channel::{Receiver, Sender};

use crate::classes::ObjectClass;
use crate::kinematics::EePose;
use crate::pose::{
    alpha_update, estimate_object, AlphaFilterState, EstimateMode, EstimateParams, ObjectGeometry,
    WorkspaceBounds,
};
use crate::protocol::EstimateMsg;
use crate::sim::{oracle_detect, render_depth, DetectMode, Scene, SceneObject, Shape};

pub(crate) struct Job {
    pub time: f64,
    pub ee: EePose,
    pub objects: Vec<SceneObject>,
}

pub(crate) struct Estimator {
    scene: Scene,
    mode: EstimateMode,
    alpha: f64,
    bounds: WorkspaceBounds,
    filters: Vec<(ObjectClass, AlphaFilterState)>,
}

fn geometry(obj: &SceneObject) -> Option<ObjectGeometry> {
    match obj.shape {
        Shape::Cylinder { radius, height } => Some(ObjectGeometry {
            height,
            surface_offset: radius,
        }),
        Shape::Box { half_extents } => Some(ObjectGeometry {
            height: 2.0 * half_extents[2],
            surface_offset: 0.0,
        }),
        Shape::Plane { .. } => None,
    }
}

impl Estimator {
    pub fn new(scene: Scene, mode: EstimateMode, alpha: f64) -> Self {
        Estimator {
            scene,
            mode,
            alpha,
            bounds: WorkspaceBounds::default(),
            filters: Vec::new(),
        }
    }

    /// Filtered estimates for every class seen in this frame.
    pub fn process(&mut self, job: &Job) -> Vec<EstimateMsg> {
        let pose = self.scene.camera_pose(&job.ee);
        let cam = &self.scene.camera;
        let mut frame = render_depth(&job.objects, &pose, &cam.intrinsics, &self.scene.render_settings());
        frame.timestamp = job.time;
        let dets = oracle_detect(&job.objects, &pose, &cam.intrinsics, cam.max_range, DetectMode::Full);
        let params = EstimateParams {
            mode: self.mode,
            bounds: &self.bounds,
            intrinsics: &cam.intrinsics,
            camera_pose: &pose,
        };
        let mut out = Vec::new();
        for det in &dets {
            let Some(geom) = job.objects.iter().find(|o| o.class == Some(det.class)).and_then(geometry) else {
                continue;
            };
            let est = match estimate_object(det, &frame, &geom, &params) {
                Ok(e) => e,
                Err(e) => {
                    log::debug!("estimate for {} skipped: {e}", det.class);
                    continue;
                }
            };
            let slot = match self.filters.iter().position(|(c, _)| *c == det.class) {
                Some(i) => i,
                None => {
                    let f = AlphaFilterState::new(self.alpha).expect("alpha validated by config");
                    self.filters.push((det.class, f));
                    self.filters.len() - 1
                }
            };
            let (state, value) = alpha_update(&self.filters[slot].1, &est.center);
            self.filters[slot].1 = state;
            out.push(EstimateMsg {
                class: det.class,
                center: value.into(),
                source: est.source,
                pixel_count: est.pixel_count,
                timestamp: job.time,
            });
        }
        out
    }
}

/// Runs until the job channel closes.
pub(crate) fn run(mut est: Estimator, jobs: Receiver<Job>, results: Sender<Vec<EstimateMsg>>) {
    for job in jobs {
        let out = est.process(&job);
        if results.send(out).is_err() {
            break;
        }
    }
}
