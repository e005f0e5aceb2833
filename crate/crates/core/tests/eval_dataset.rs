use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teletwin_core::dataset::coco::mask_to_rle;
use teletwin_core::dataset::*;
use teletwin_core::eval::*;
use teletwin_core::mask::Mask;

fn dataset(n: usize, seed: u64) -> (tempfile::TempDir, CocoDataset) {
    let d = tempfile::tempdir().unwrap();
    let out = generate(&SynthConfig::new(n, seed, d.path())).unwrap();
    let mut all = out.train;
    all.images.extend(out.test.images);
    all.annotations.extend(out.test.annotations);
    (d, all)
}

fn oracle_results(gt: &CocoDataset, compressed: bool) -> Vec<CocoResult> {
    gt.annotations
        .iter()
        .map(|a| {
            let img = gt.image(a.image_id).unwrap();
            let m = a.segmentation.to_mask(img.width, img.height).unwrap();
            CocoResult {
                image_id: a.image_id,
                category_id: a.category_id,
                segmentation: Segmentation::Rle(mask_to_rle(&m, compressed)),
                score: 1.0,
            }
        })
        .collect()
}

#[test]
fn oracle_predictions_score_perfectly() {
    let (_d, gt) = dataset(8, 21);
    for compressed in [false, true] {
        let set = build_eval_set(&gt, &oracle_results(&gt, compressed)).unwrap();
        let r = evaluate(&set);
        assert_eq!(r.classes.len(), 8);
        for c in &r.classes {
            assert_eq!(c.ap, Some(100.0));
            assert_eq!(c.ap50, Some(100.0));
            assert_eq!(c.ap75, Some(100.0));
            assert_eq!(c.objects.tp, 8);
            assert_eq!((c.objects.fp, c.objects.fn_), (0, 0));
            assert_eq!(c.gt_count, 8);
        }
    }
}

/// Grows or shrinks a mask by one pixel ring, or shifts it.
fn perturb(m: &Mask, rng: &mut impl Rng) -> Mask {
    let (w, h) = (m.width(), m.height());
    match rng.random_range(0..3) {
        0 => Mask::from_fn(w, h, |x, y| {
            let (x, y) = (i64::from(x), i64::from(y));
            m.get_i(x, y) || m.get_i(x - 1, y) || m.get_i(x + 1, y) || m.get_i(x, y - 1) || m.get_i(x, y + 1)
        }),
        1 => Mask::from_fn(w, h, |x, y| {
            let (x, y) = (i64::from(x), i64::from(y));
            m.get_i(x, y) && m.get_i(x - 1, y) && m.get_i(x + 1, y) && m.get_i(x, y - 1) && m.get_i(x, y + 1)
        }),
        _ => {
            let (dx, dy) = (rng.random_range(-6i64..=6), rng.random_range(-6i64..=6));
            Mask::from_fn(w, h, |x, y| m.get_i(i64::from(x) - dx, i64::from(y) - dy))
        }
    }
}

#[test]
fn perturbed_predictions_keep_metric_invariants() {
    let (_d, gt) = dataset(4, 3);
    let base = build_eval_set(&gt, &oracle_results(&gt, true)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let mut set = base.clone();
        for img in &mut set {
            img.predictions.retain(|_| rng.random_bool(0.85));
            for p in &mut img.predictions {
                for _ in 0..rng.random_range(0..3) {
                    p.mask = perturb(&p.mask, &mut rng);
                }
                p.score = rng.random_range(0.0..1.0);
            }
        }
        let r = evaluate(&set);
        for c in &r.classes {
            if let (Some(a50), Some(a75)) = (c.ap50, c.ap75) {
                assert!(a50 >= a75);
                assert!((0.0..=100.0).contains(&a50));
            }
            assert_eq!(c.objects.tp + c.objects.fn_, c.gt_count);
        }
    }
}

#[test]
fn unknown_image_rejected() {
    let (_d, gt) = dataset(1, 1);
    let mut res = oracle_results(&gt, false);
    res[0].image_id = 999;
    assert!(matches!(build_eval_set(&gt, &res), Err(EvalError::UnknownImage(999))));
}
