//! Synthetic instance-segmentation dataset: cutouts composited over
//! backgrounds, occlusions resolved by mask subtraction, COCO output.

pub mod augment;
pub mod coco;
pub mod compose;
pub mod cutout;
mod generate;
pub mod polygon;

use thiserror::Error;

use crate::classes::ObjectClass;

pub use augment::{apply_transform, augment, Transform};
pub use coco::{CocoAnnotation, CocoCategory, CocoDataset, CocoImage, Rle, RleCounts, Segmentation};
pub use compose::{compose_image, resolve_occlusions, Composition, PlacedInstance};
pub use cutout::Cutout;
pub use generate::{generate, synthesize, Assets, Manifest, SynthConfig, SynthImage, SynthOutput};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("transform with scale {0} leaves an empty mask")]
    DegenerateScale(f64),
    #[error("could not place {0} with enough visibility")]
    PlacementFailed(ObjectClass),
    #[error("class {0} given more than once")]
    DuplicateClass(ObjectClass),
    #[error("instance of {0} has an empty mask")]
    EmptyMask(ObjectClass),
    #[error("missing assets: {0}")]
    MissingAssets(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("image error: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// COCO annotations for the visible masks of one image, ids starting at
/// `first_id`.
pub fn annotate(
    instances: &[PlacedInstance],
    image_id: u64,
    first_id: u64,
) -> Result<Vec<CocoAnnotation>, DatasetError> {
    instances
        .iter()
        .enumerate()
        .map(|(k, p)| {
            if p.visible.is_empty() {
                return Err(DatasetError::EmptyMask(p.class));
            }
            let polys: Vec<Vec<f64>> = polygon::trace_polygons(&p.visible)
                .iter()
                .map(polygon::ring_to_coco)
                .collect();
            let bbox = polygon::polygons_bbox(&polys).expect("nonempty mask has a polygon");
            Ok(CocoAnnotation {
                id: first_id + k as u64,
                image_id,
                category_id: p.class.category_id(),
                segmentation: Segmentation::Polygons(polys),
                bbox,
                area: p.visible.count() as f64,
                iscrowd: 0,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::Mask;

    fn inst(mask: Mask) -> PlacedInstance {
        PlacedInstance {
            class: ObjectClass::Pipettor,
            transform: Transform::IDENTITY,
            offset: (0, 0),
            full: mask.clone(),
            visible: mask,
            z: 0,
        }
    }

    #[test]
    fn square_annotation() {
        let m = Mask::from_fn(30, 30, |x, y| (5..15).contains(&x) && (5..15).contains(&y));
        let a = &annotate(&[inst(m)], 3, 10).unwrap()[0];
        assert_eq!(a.id, 10);
        assert_eq!(a.image_id, 3);
        assert_eq!(a.category_id, ObjectClass::Pipettor.category_id());
        assert_eq!(a.bbox, [5.0, 5.0, 10.0, 10.0]);
        assert_eq!(a.area, 100.0);
        assert_eq!(
            a.segmentation,
            Segmentation::Polygons(vec![vec![5.0, 5.0, 15.0, 5.0, 15.0, 15.0, 5.0, 15.0]])
        );
    }

    #[test]
    fn split_mask_gives_two_polygons() {
        let m = Mask::from_fn(30, 10, |x, _| x < 5 || x > 20);
        let a = &annotate(&[inst(m)], 0, 0).unwrap()[0];
        let Segmentation::Polygons(p) = &a.segmentation else { panic!() };
        assert_eq!(p.len(), 2);
        assert_eq!(a.bbox, [0.0, 0.0, 30.0, 10.0]);
    }

    #[test]
    fn empty_mask_rejected() {
        assert!(matches!(
            annotate(&[inst(Mask::new(4, 4))], 0, 0),
            Err(DatasetError::EmptyMask(_))
        ));
    }
}
