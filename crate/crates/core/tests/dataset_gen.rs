use std::collections::BTreeSet;
use std::fs;

use teletwin_core::dataset::polygon::polygon_area;
use teletwin_core::dataset::*;

fn read_all(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["", "images"] {
        let d = dir.join(sub);
        let mut names: Vec<_> = fs::read_dir(&d)
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .map(|e| e.file_name().into_string().unwrap())
            .collect();
        names.sort();
        for n in names {
            out.push((format!("{sub}/{n}"), fs::read(d.join(&n)).unwrap()));
        }
    }
    out
}

#[test]
fn fixed_seed_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate(&SynthConfig::new(8, 42, a.path())).unwrap();
    generate(&SynthConfig::new(8, 42, b.path())).unwrap();
    let (fa, fb) = (read_all(a.path()), read_all(b.path()));
    assert_eq!(fa.len(), 8 + 3);
    assert_eq!(fa, fb);
    let c = tempfile::tempdir().unwrap();
    generate(&SynthConfig::new(8, 43, c.path())).unwrap();
    assert_ne!(read_all(c.path()), fa);
}

#[test]
fn output_files_and_split() {
    let d = tempfile::tempdir().unwrap();
    let out = generate(&SynthConfig::new(12, 7, d.path())).unwrap();
    assert_eq!((out.train.images.len(), out.test.images.len()), (9, 3));
    let train: CocoDataset = serde_json::from_slice(&fs::read(d.path().join("train.json")).unwrap()).unwrap();
    assert_eq!(train, out.train);
    let manifest: Manifest = serde_json::from_slice(&fs::read(d.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.seed, 7);
    for split in [&out.train, &out.test] {
        split.validate().unwrap();
        assert_eq!(split.categories.len(), 8);
        for img in &split.images {
            let p = d.path().join(&img.file_name);
            let decoded = image::open(&p).unwrap();
            assert_eq!((decoded.width(), decoded.height()), (img.width, img.height));
        }
    }
    let ids: BTreeSet<u64> = out.train.annotations.iter().chain(&out.test.annotations).map(|a| a.id).collect();
    assert_eq!(ids.len(), 12 * 8);
}

#[test]
fn every_annotation_rasterizes_to_its_visible_mask() {
    let assets = Assets::procedural(512);
    let images = synthesize(&assets, 16, 5).unwrap();
    for im in &images {
        let anns = annotate(&im.instances, 1, 1).unwrap();
        assert_eq!(anns.len(), 8);
        let cats: BTreeSet<u32> = anns.iter().map(|a| a.category_id).collect();
        assert_eq!(cats.len(), 8);
        for (a, p) in anns.iter().zip(&im.instances) {
            let m = a.segmentation.to_mask(512, 512).unwrap();
            assert_eq!(m, p.visible);
            let Segmentation::Polygons(polys) = &a.segmentation else { panic!() };
            let area: f64 = polys.iter().map(|q| polygon_area(q)).sum();
            assert!((area - a.area).abs() <= 0.02 * a.area);
            let b = p.visible.bbox().unwrap();
            assert_eq!(a.bbox, [b.x as f64, b.y as f64, b.w as f64, b.h as f64]);
        }
    }
}
