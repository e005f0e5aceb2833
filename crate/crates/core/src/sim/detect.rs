//! Oracle detector: exact visibility masks from the ray caster, standing in
//! for the segmentation network and the colour-marker classifier.

use crate::detection::{Detection, Part};
use crate::mask::Mask;

use super::render::cast_hits;
use super::scene::{CameraIntrinsics, CameraPose, SceneObject};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectMode {
    /// One detection per visible object.
    Full,
    /// One detection per visible half, split at the object's mid-height.
    Halves,
}

/// Detections for every classed object with a nonempty visible mask, in
/// scene order; in `Halves` mode the top half precedes the bottom half.
pub fn oracle_detect(
    objects: &[SceneObject],
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    max_range: f64,
    mode: DetectMode,
) -> Vec<Detection> {
    let hits = cast_hits(objects, pose, intr, max_range);
    let (w, h) = (intr.width, intr.height);
    let mut out = Vec::new();
    for (i, obj) in objects.iter().enumerate() {
        let Some(class) = obj.class else { continue };
        let mut full = Mask::new(w, h);
        let mut top = Mask::new(w, h);
        let mut bottom = Mask::new(w, h);
        for (p, hit) in hits.iter().enumerate() {
            let Some(hit) = hit else { continue };
            if hit.object != i {
                continue;
            }
            let (x, y) = (p as u32 % w, p as u32 / w);
            full.set(x, y, true);
            if hit.world.z >= obj.position.z {
                top.set(x, y, true);
            } else {
                bottom.set(x, y, true);
            }
        }
        match mode {
            DetectMode::Full => out.extend(Detection::from_frame_mask(class, 1.0, Part::Full, &full)),
            DetectMode::Halves => {
                out.extend(Detection::from_frame_mask(class, 1.0, Part::Top, &top));
                out.extend(Detection::from_frame_mask(class, 1.0, Part::Bottom, &bottom));
            }
        }
    }
    out
}
