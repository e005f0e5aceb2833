//! Instance-segmentation scoring: COCO-style mask AP and the
//! intersection-over-ground-truth object counts.

mod report;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classes::ObjectClass;
use crate::dataset::{CocoDataset, Segmentation};
use crate::mask::Mask;

pub use report::{evaluate, format_csv, format_table, ClassReport, EvalReport};

pub const MAX_DETS: usize = 100;
pub const RECALL_POINTS: usize = 101;
/// Medium-size band in pixels, `[32², 96²)`.
pub const MEDIUM_BAND: (f64, f64) = (32.0 * 32.0, 96.0 * 96.0);
pub const OBJECT_COVER_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction references unknown image {0}")]
    UnknownImage(u64),
    #[error("unknown category id {0}")]
    UnknownCategory(u32),
    #[error("image {image}: {msg}")]
    BadSegmentation { image: u64, msg: String },
    #[error("invalid score {0}")]
    InvalidScore(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// The IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * f64::from(i)).collect()
}

pub fn mask_iou(a: &Mask, b: &Mask) -> f64 {
    assert!(a.same_size(b), "mask sizes differ");
    let union = a.union_count(b);
    if union == 0 {
        0.0
    } else {
        a.intersection_count(b) as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtInstance {
    pub class: ObjectClass,
    pub mask: Mask,
    /// Area used for size bands.
    pub area: f64,
}

impl GtInstance {
    pub fn new(class: ObjectClass, mask: Mask) -> Self {
        let area = mask.count() as f64;
        GtInstance { class, mask, area }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: ObjectClass,
    pub mask: Mask,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageEval {
    pub image_id: u64,
    pub gt: Vec<GtInstance>,
    pub predictions: Vec<Prediction>,
}

/// One record of a COCO results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoResult {
    pub image_id: u64,
    pub category_id: u32,
    pub segmentation: Segmentation,
    pub score: f64,
}

fn class_of(id: u32) -> Result<ObjectClass, EvalError> {
    ObjectClass::from_category_id(id).ok_or(EvalError::UnknownCategory(id))
}

/// Rasterizes ground truth and predictions into per-image evaluation sets,
/// in the ground truth's image order.
pub fn build_eval_set(gt: &CocoDataset, results: &[CocoResult]) -> Result<Vec<ImageEval>, EvalError> {
    let mut index = HashMap::new();
    let mut out: Vec<ImageEval> = Vec::with_capacity(gt.images.len());
    for img in &gt.images {
        index.insert(img.id, (out.len(), img.width, img.height));
        out.push(ImageEval {
            image_id: img.id,
            gt: Vec::new(),
            predictions: Vec::new(),
        });
    }
    let raster = |image: u64, s: &Segmentation, w, h| {
        s.to_mask(w, h)
            .map_err(|msg| EvalError::BadSegmentation { image, msg })
    };
    for a in &gt.annotations {
        let &(i, w, h) = index.get(&a.image_id).ok_or(EvalError::UnknownImage(a.image_id))?;
        out[i].gt.push(GtInstance {
            class: class_of(a.category_id)?,
            mask: raster(a.image_id, &a.segmentation, w, h)?,
            area: a.area,
        });
    }
    for r in results {
        if !(0.0..=1.0).contains(&r.score) {
            return Err(EvalError::InvalidScore(r.score));
        }
        let &(i, w, h) = index.get(&r.image_id).ok_or(EvalError::UnknownImage(r.image_id))?;
        out[i].predictions.push(Prediction {
            class: class_of(r.category_id)?,
            mask: raster(r.image_id, &r.segmentation, w, h)?,
            score: r.score,
        });
    }
    Ok(out)
}

/// Predictions of `class` in an image, highest score first (stable), capped
/// at [`MAX_DETS`].
fn ranked(img: &ImageEval, class: ObjectClass) -> Vec<&Prediction> {
    let mut p: Vec<&Prediction> = img.predictions.iter().filter(|p| p.class == class).collect();
    p.sort_by(|a, b| b.score.total_cmp(&a.score));
    p.truncate(MAX_DETS);
    p
}

fn in_band(area: f64, band: Option<(f64, f64)>) -> bool {
    band.is_none_or(|(lo, hi)| area >= lo && area < hi)
}

/// A scored detection after matching: `None` when it is ignored.
type Outcome = (f64, Option<bool>);

/// COCO-style greedy matching in one image at one IoU threshold.
fn match_image(
    gts: &[&GtInstance],
    preds: &[&Prediction],
    ious: &[Vec<f64>],
    thr: f64,
    band: Option<(f64, f64)>,
    npig: &mut usize,
) -> Vec<Outcome> {
    // non-ignored ground truth first
    let mut order: Vec<usize> = (0..gts.len()).collect();
    order.sort_by_key(|&g| !in_band(gts[g].area, band));
    let ignored: Vec<bool> = order.iter().map(|&g| !in_band(gts[g].area, band)).collect();
    *npig += ignored.iter().filter(|i| !**i).count();
    let mut taken = vec![false; gts.len()];
    preds
        .iter()
        .enumerate()
        .map(|(d, p)| {
            let mut best = thr.min(1.0 - 1e-10);
            let mut m: Option<usize> = None;
            for (k, &g) in order.iter().enumerate() {
                if taken[k] {
                    continue;
                }
                if m.is_some_and(|mk| !ignored[mk]) && ignored[k] {
                    break;
                }
                if ious[d][g] < best {
                    continue;
                }
                best = ious[d][g];
                m = Some(k);
            }
            match m {
                Some(k) => {
                    taken[k] = true;
                    (p.score, if ignored[k] { None } else { Some(true) })
                }
                None if !in_band(p.mask.count() as f64, band) => (p.score, None),
                None => (p.score, Some(false)),
            }
        })
        .collect()
}

/// 101-point interpolated precision from outcomes sorted by score.
pub fn interpolated_ap(outcomes: &[bool], npig: usize) -> f64 {
    if npig == 0 {
        return 0.0;
    }
    let n = outcomes.len();
    let mut rc = Vec::with_capacity(n);
    let mut pr = Vec::with_capacity(n);
    let (mut tp, mut fp) = (0usize, 0usize);
    for &o in outcomes {
        if o {
            tp += 1;
        } else {
            fp += 1;
        }
        rc.push(tp as f64 / npig as f64);
        pr.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..n.saturating_sub(1)).rev() {
        if pr[i + 1] > pr[i] {
            pr[i] = pr[i + 1];
        }
    }
    let mut sum = 0.0;
    for k in 0..RECALL_POINTS {
        let r = k as f64 / (RECALL_POINTS - 1) as f64;
        let idx = rc.partition_point(|&x| x < r);
        if idx < n {
            sum += pr[idx];
        }
    }
    sum / RECALL_POINTS as f64
}

/// Mask AP of `class` in percent, averaged over `thresholds`. `None` when
/// the class has no (non-ignored) ground truth.
pub fn pixel_ap(
    images: &[ImageEval],
    class: ObjectClass,
    thresholds: &[f64],
    band: Option<(f64, f64)>,
) -> Option<f64> {
    let per_image: Vec<(Vec<&GtInstance>, Vec<&Prediction>, Vec<Vec<f64>>)> = images
        .iter()
        .map(|img| {
            let gts: Vec<&GtInstance> = img.gt.iter().filter(|g| g.class == class).collect();
            let preds = ranked(img, class);
            let ious = preds
                .iter()
                .map(|p| gts.iter().map(|g| mask_iou(&p.mask, &g.mask)).collect())
                .collect();
            (gts, preds, ious)
        })
        .collect();
    let mut total = 0.0;
    for &thr in thresholds {
        let mut npig = 0;
        let mut all: Vec<Outcome> = Vec::new();
        for (gts, preds, ious) in &per_image {
            all.extend(match_image(gts, preds, ious, thr, band, &mut npig));
        }
        if npig == 0 {
            return None;
        }
        all.sort_by(|a, b| b.0.total_cmp(&a.0));
        let outcomes: Vec<bool> = all.iter().filter_map(|o| o.1).collect();
        total += interpolated_ap(&outcomes, npig);
    }
    Some(100.0 * total / thresholds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ObjectMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Share of `gt` covered by `pred`.
pub fn cover_ratio(pred: &Mask, gt: &Mask) -> f64 {
    let n = gt.count();
    if n == 0 {
        0.0
    } else {
        pred.intersection_count(gt) as f64 / n as f64
    }
}

/// Object-level counts: a ground-truth object is found when a prediction of
/// its class covers at least half of it. Predictions are matched greedily by
/// score, one object each; an unmatched prediction is a false positive only
/// if it covers less than half of every object of its class.
pub fn object_counts(images: &[ImageEval], class: ObjectClass) -> ObjectMetrics {
    let mut m = ObjectMetrics::default();
    for img in images {
        let gts: Vec<&GtInstance> = img.gt.iter().filter(|g| g.class == class).collect();
        let mut preds: Vec<&Prediction> = img.predictions.iter().filter(|p| p.class == class).collect();
        preds.sort_by(|a, b| b.score.total_cmp(&a.score));
        let mut taken = vec![false; gts.len()];
        for p in preds {
            let ratios: Vec<f64> = gts.iter().map(|g| cover_ratio(&p.mask, &g.mask)).collect();
            let best = (0..gts.len())
                .filter(|&g| !taken[g] && ratios[g] >= OBJECT_COVER_THRESHOLD)
                .max_by(|&a, &b| ratios[a].total_cmp(&ratios[b]).then(b.cmp(&a)));
            match best {
                Some(g) => {
                    taken[g] = true;
                    m.tp += 1;
                }
                None if ratios.iter().all(|&r| r < OBJECT_COVER_THRESHOLD) => m.fp += 1,
                None => {}
            }
        }
        m.fn_ += taken.iter().filter(|t| !**t).count();
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sq(x: u32, y: u32, s: u32) -> Mask {
        Mask::from_fn(40, 40, |i, j| (x..x + s).contains(&i) && (y..y + s).contains(&j))
    }

    const C: ObjectClass = ObjectClass::CentrifugeTestTube;

    fn pred(mask: Mask, score: f64) -> Prediction {
        Prediction {
            class: C,
            mask,
            score,
        }
    }

    #[test]
    fn iou_examples() {
        assert_eq!(mask_iou(&sq(0, 0, 10), &sq(0, 0, 10)), 1.0);
        assert_eq!(mask_iou(&sq(0, 0, 10), &sq(20, 20, 10)), 0.0);
        assert_eq!(mask_iou(&sq(0, 0, 10), &sq(5, 0, 10)), 50.0 / 150.0);
        assert_eq!(mask_iou(&Mask::new(4, 4), &Mask::new(4, 4)), 0.0);
    }

    #[test]
    fn thresholds() {
        let t = coco_thresholds();
        assert_eq!(t.len(), 10);
        assert!((t[9] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_empty_detectors() {
        let gt = vec![GtInstance::new(C, sq(0, 0, 10)), GtInstance::new(C, sq(20, 20, 10))];
        let perfect = vec![ImageEval {
            image_id: 1,
            predictions: gt.iter().map(|g| pred(g.mask.clone(), 1.0)).collect(),
            gt: gt.clone(),
        }];
        assert_eq!(pixel_ap(&perfect, C, &coco_thresholds(), None), Some(100.0));
        assert_eq!(pixel_ap(&perfect, C, &[0.75], None), Some(100.0));
        assert_eq!(
            object_counts(&perfect, C),
            ObjectMetrics { tp: 2, fp: 0, fn_: 0 }
        );
        let none = vec![ImageEval {
            image_id: 1,
            gt,
            predictions: vec![],
        }];
        assert_eq!(pixel_ap(&none, C, &coco_thresholds(), None), Some(0.0));
        assert_eq!(pixel_ap(&none, ObjectClass::Swab, &coco_thresholds(), None), None);
        assert_eq!(object_counts(&none, C), ObjectMetrics { tp: 0, fp: 0, fn_: 2 });
    }

    #[test]
    fn hand_enumerated_two_by_two() {
        // spurious 0.9 ranks first, then a 0.8 match at IoU 0.6.
        // PR points: (r 0, p 0), (r 0.5, p 0.5); interpolated precision is 0.5
        // for the 51 recall points 0.00..=0.50 and 0 above.
        let g1 = sq(0, 0, 10);
        let p1 = Mask::from_fn(40, 40, |i, j| i < 10 && j < 6);
        let iou = mask_iou(&p1, &g1);
        assert!((iou - 0.6).abs() < 1e-12, "{iou}");
        let img = vec![ImageEval {
            image_id: 1,
            gt: vec![GtInstance::new(C, g1), GtInstance::new(C, sq(25, 25, 10))],
            predictions: vec![pred(p1, 0.8), pred(sq(12, 25, 6), 0.9)],
        }];
        let ap50 = pixel_ap(&img, C, &[0.5], None).unwrap();
        assert_eq!(ap50, 100.0 * 51.0 * 0.5 / 101.0);
        assert_eq!(pixel_ap(&img, C, &[0.75], None), Some(0.0));
    }

    #[test]
    fn medium_band_ignores_small_objects() {
        // 10x10 is small, 40x40 would be medium; only the small one exists here
        let img = vec![ImageEval {
            image_id: 1,
            gt: vec![GtInstance::new(C, sq(0, 0, 10))],
            predictions: vec![pred(sq(0, 0, 10), 1.0)],
        }];
        assert_eq!(pixel_ap(&img, C, &[0.5], Some(MEDIUM_BAND)), None);
        let big = Mask::from_fn(80, 80, |i, j| i < 40 && j < 40);
        let small = Mask::from_fn(80, 80, |i, j| i >= 60 && j >= 60);
        let img = vec![ImageEval {
            image_id: 1,
            gt: vec![GtInstance::new(C, big.clone()), GtInstance::new(C, small.clone())],
            // a miss on the small object must not count against AP_M
            predictions: vec![pred(big, 0.9)],
        }];
        assert_eq!(pixel_ap(&img, C, &[0.5], Some(MEDIUM_BAND)), Some(100.0));
        assert!(pixel_ap(&img, C, &[0.5], None).unwrap() < 100.0);
    }

    #[test]
    fn half_cover_is_true_positive() {
        let g = sq(0, 0, 10);
        let half = Mask::from_fn(40, 40, |i, j| i < 5 && j < 10);
        assert_eq!(cover_ratio(&half, &g), 0.5);
        let img = vec![ImageEval {
            image_id: 1,
            gt: vec![GtInstance::new(C, g)],
            predictions: vec![pred(half, 0.3)],
        }];
        assert_eq!(object_counts(&img, C), ObjectMetrics { tp: 1, fp: 0, fn_: 0 });
    }

    #[test]
    fn object_count_false_positive_rules() {
        let g = sq(0, 0, 10);
        let img = vec![ImageEval {
            image_id: 1,
            gt: vec![GtInstance::new(C, g.clone())],
            predictions: vec![
                pred(g.clone(), 0.9),
                // duplicate on an already found object: neither TP nor FP
                pred(g, 0.8),
                pred(sq(20, 20, 5), 0.7),
            ],
        }];
        assert_eq!(object_counts(&img, C), ObjectMetrics { tp: 1, fp: 1, fn_: 0 });
    }

    /// Independent PR integration: for each recall level, the best precision
    /// among all ranked prefixes reaching it.
    fn brute_ap(gt: &[Mask], preds: &[(Mask, f64)], thr: f64) -> f64 {
        let mut order: Vec<usize> = (0..preds.len()).collect();
        order.sort_by(|&a, &b| preds[b].1.total_cmp(&preds[a].1));
        let mut used = vec![false; gt.len()];
        let mut hits = Vec::new();
        for &d in &order {
            let mut best: Option<(usize, f64)> = None;
            for (g, m) in gt.iter().enumerate() {
                let iou = mask_iou(&preds[d].0, m);
                if !used[g] && iou >= thr.min(1.0 - 1e-10) && best.is_none_or(|(_, b)| iou >= b) {
                    best = Some((g, iou));
                }
            }
            if let Some((g, _)) = best {
                used[g] = true;
            }
            hits.push(best.is_some());
        }
        let mut sum = 0.0;
        for k in 0..=100 {
            let r = k as f64 / 100.0;
            let mut p_best: f64 = 0.0;
            for len in 1..=hits.len() {
                let tp = hits[..len].iter().filter(|h| **h).count() as f64;
                if tp / gt.len() as f64 >= r {
                    p_best = p_best.max(tp / len as f64);
                }
            }
            sum += p_best;
        }
        100.0 * sum / 101.0
    }

    fn arb_square() -> impl Strategy<Value = Mask> {
        (0u32..30, 0u32..30, 3u32..10).prop_map(|(x, y, s)| sq(x, y, s))
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            gt in prop::collection::vec(arb_square(), 1..4),
            preds in prop::collection::vec((arb_square(), 0u32..1000), 0..=5),
            thr_i in 0usize..10,
        ) {
            let thr = coco_thresholds()[thr_i];
            // distinct scores keep the ranking unambiguous
            let mut seen = std::collections::BTreeSet::new();
            let preds: Vec<(Mask, f64)> = preds
                .into_iter()
                .filter(|(_, s)| seen.insert(*s))
                .map(|(m, s)| (m, f64::from(s) / 1000.0))
                .collect();
            let img = vec![ImageEval {
                image_id: 1,
                gt: gt.iter().map(|m| GtInstance::new(C, m.clone())).collect(),
                predictions: preds.iter().map(|(m, s)| pred(m.clone(), *s)).collect(),
            }];
            let ap = pixel_ap(&img, C, &[thr], None).unwrap();
            prop_assert!((ap - brute_ap(&gt, &preds, thr)).abs() < 1e-9);
        }

        #[test]
        fn iou_symmetric_and_identity(a in arb_square(), b in arb_square()) {
            prop_assert_eq!(mask_iou(&a, &b), mask_iou(&b, &a));
            prop_assert_eq!(mask_iou(&a, &b) == 1.0, a == b);
        }

        #[test]
        fn tp_plus_fn_is_gt_count(
            gt in prop::collection::vec(arb_square(), 0..4),
            preds in prop::collection::vec((arb_square(), 0.0f64..1.0), 0..6),
        ) {
            let img = vec![ImageEval {
                image_id: 1,
                gt: gt.iter().map(|m| GtInstance::new(C, m.clone())).collect(),
                predictions: preds.iter().map(|(m, s)| pred(m.clone(), *s)).collect(),
            }];
            let m = object_counts(&img, C);
            prop_assert_eq!(m.tp + m.fn_, gt.len());
            prop_assert!(m.tp <= preds.len());
        }
    }
}
