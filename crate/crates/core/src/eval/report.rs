use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{coco_thresholds, object_counts, pixel_ap, ImageEval, ObjectMetrics, MEDIUM_BAND};
use crate::classes::ObjectClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: ObjectClass,
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_m: Option<f64>,
    pub objects: ObjectMetrics,
    pub gt_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<ClassReport>,
    pub n_images: usize,
}

fn mean(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let xs: Vec<f64> = v.flatten().collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

impl EvalReport {
    pub fn mean_ap(&self) -> Option<f64> {
        mean(self.classes.iter().map(|c| c.ap))
    }
    pub fn mean_ap50(&self) -> Option<f64> {
        mean(self.classes.iter().map(|c| c.ap50))
    }
    pub fn mean_ap75(&self) -> Option<f64> {
        mean(self.classes.iter().map(|c| c.ap75))
    }
    pub fn mean_ap_m(&self) -> Option<f64> {
        mean(self.classes.iter().map(|c| c.ap_m))
    }
}

/// Scores every class that has ground truth or predictions, in category order.
pub fn evaluate(images: &[ImageEval]) -> EvalReport {
    let thr = coco_thresholds();
    let classes = ObjectClass::ALL
        .par_iter()
        .filter(|&&c| {
            images
                .iter()
                .any(|i| i.gt.iter().any(|g| g.class == c) || i.predictions.iter().any(|p| p.class == c))
        })
        .map(|&class| ClassReport {
            class,
            ap: pixel_ap(images, class, &thr, None),
            ap50: pixel_ap(images, class, &thr[..1], None),
            ap75: pixel_ap(images, class, &thr[5..6], None),
            ap_m: pixel_ap(images, class, &thr, Some(MEDIUM_BAND)),
            objects: object_counts(images, class),
            gt_count: images.iter().map(|i| i.gt.iter().filter(|g| g.class == class).count()).sum(),
        })
        .collect();
    EvalReport {
        classes,
        n_images: images.len(),
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"))
}

/// Fixed-width table: pixel metrics in percent, then object counts.
pub fn format_table(r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<22} {:>6} {:>6} {:>6} {:>6} {:>7} {:>7} {:>7}",
        "class", "AP", "AP50", "AP75", "AP_M", "TP", "FP", "FN"
    );
    for c in &r.classes {
        let _ = writeln!(
            s,
            "{:<22} {:>6} {:>6} {:>6} {:>6} {:>7} {:>7} {:>7}",
            c.class.display_name(),
            cell(c.ap),
            cell(c.ap50),
            cell(c.ap75),
            cell(c.ap_m),
            format!("{}/{}", c.objects.tp, c.gt_count),
            c.objects.fp,
            c.objects.fn_
        );
    }
    let _ = writeln!(
        s,
        "{:<22} {:>6} {:>6} {:>6} {:>6}",
        "mean",
        cell(r.mean_ap()),
        cell(r.mean_ap50()),
        cell(r.mean_ap75()),
        cell(r.mean_ap_m())
    );
    s
}

pub fn format_csv(r: &EvalReport) -> String {
    let mut s = String::from("class,ap,ap50,ap75,ap_m,tp,fp,fn,gt\n");
    let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
    for c in &r.classes {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            c.class.name(),
            f(c.ap),
            f(c.ap50),
            f(c.ap75),
            f(c.ap_m),
            c.objects.tp,
            c.objects.fp,
            c.objects.fn_,
            c.gt_count
        );
    }
    s
}
