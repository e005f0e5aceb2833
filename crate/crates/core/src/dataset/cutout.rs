//! Object cutouts and backgrounds, either loaded from disk or drawn
//! procedurally.

use std::path::Path;

use image::{Rgba, RgbaImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DatasetError;
use crate::classes::ObjectClass;
use crate::mask::Mask;

/// An RGBA object image; pixels with nonzero alpha form the object mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Cutout {
    pub class: ObjectClass,
    pub image: RgbaImage,
}

impl Cutout {
    /// Crops to the alpha support; `None` if the support is empty.
    pub fn new(class: ObjectClass, image: RgbaImage) -> Option<Self> {
        let c = Cutout { class, image };
        let b = c.mask().bbox()?;
        let image = image::imageops::crop_imm(&c.image, b.x, b.y, b.w, b.h).to_image();
        Some(Cutout { class, image })
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn mask(&self) -> Mask {
        Mask::from_fn(self.image.width(), self.image.height(), |x, y| {
            self.image.get_pixel(x, y)[3] > 0
        })
    }
}

/// Procedural silhouettes are drawn on a grid where `s(x, y)` tests
/// membership in units of pixels.
fn draw(w: u32, h: u32, color: [u8; 3], shape: impl Fn(f64, f64) -> Option<f64>) -> RgbaImage {
    RgbaImage::from_fn(w, h, |x, y| {
        let (px, py) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
        match shape(px, py) {
            Some(shade) => {
                let k = 0.6 + 0.4 * shade.clamp(0.0, 1.0);
                Rgba([
                    (f64::from(color[0]) * k) as u8,
                    (f64::from(color[1]) * k) as u8,
                    (f64::from(color[2]) * k) as u8,
                    255,
                ])
            }
            None => Rgba([0, 0, 0, 0]),
        }
    })
}

fn rect(px: f64, py: f64, x0: f64, y0: f64, x1: f64, y1: f64) -> bool {
    px >= x0 && px < x1 && py >= y0 && py < y1
}

fn ellipse(px: f64, py: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> bool {
    ((px - cx) / rx).powi(2) + ((py - cy) / ry).powi(2) <= 1.0
}

/// Horizontal band `[y0, y1)` whose half-width tapers linearly from `w0` to `w1`.
fn taper(px: f64, py: f64, cx: f64, y0: f64, y1: f64, w0: f64, w1: f64) -> bool {
    if py < y0 || py >= y1 {
        return false;
    }
    let t = (py - y0) / (y1 - y0);
    (px - cx).abs() <= w0 + (w1 - w0) * t
}

/// Cylindrical shading across the width.
fn shade(px: f64, cx: f64, half: f64) -> f64 {
    1.0 - ((px - cx) / half.max(1.0)).powi(2)
}

/// Draws one procedural silhouette; `k` in roughly [0.9, 1.1] varies the
/// proportions between variants.
pub fn procedural_cutout(class: ObjectClass, k: [f64; 2]) -> Cutout {
    let (a, b) = (k[0], k[1]);
    let img = match class {
        ObjectClass::CellScraper => {
            let (w, h) = ((50.0 * a) as u32, (150.0 * b) as u32);
            let cx = f64::from(w) / 2.0;
            let hf = f64::from(h);
            draw(w, h, [90, 160, 220], |x, y| {
                (rect(x, y, 0.0, 0.0, f64::from(w), 12.0) || rect(x, y, cx - 4.0, 10.0, cx + 4.0, hf))
                    .then(|| shade(x, cx, cx))
            })
        }
        ObjectClass::MicroTestTube => {
            let (w, h) = ((34.0 * a) as u32, (80.0 * b) as u32);
            let cx = f64::from(w) / 2.0;
            let hf = f64::from(h);
            draw(w, h, [230, 200, 60], |x, y| {
                (rect(x, y, 0.0, 0.0, f64::from(w), 10.0)
                    || rect(x, y, cx - 13.0, 10.0, cx + 13.0, hf * 0.65)
                    || taper(x, y, cx, hf * 0.65, hf, 13.0, 2.0))
                .then(|| shade(x, cx, 13.0))
            })
        }
        ObjectClass::NeedleHolder => {
            let (w, h) = ((52.0 * a) as u32, (120.0 * b) as u32);
            let cx = f64::from(w) / 2.0;
            let hf = f64::from(h);
            draw(w, h, [200, 200, 210], |x, y| {
                (rect(x, y, cx - 5.0, 0.0, cx + 5.0, 20.0)
                    || rect(x, y, cx - 15.0, 20.0, cx + 15.0, hf - 8.0)
                    || rect(x, y, 0.0, hf - 8.0, f64::from(w), hf))
                .then(|| shade(x, cx, 15.0))
            })
        }
        ObjectClass::PasteurPipette => {
            let (w, h) = ((28.0 * a) as u32, (180.0 * b) as u32);
            let cx = f64::from(w) / 2.0;
            let hf = f64::from(h);
            draw(w, h, [240, 240, 240], |x, y| {
                (ellipse(x, y, cx, 20.0, cx, 20.0) || taper(x, y, cx, 36.0, hf, 5.0, 1.5))
                    .then(|| shade(x, cx, cx))
            })
        }
        ObjectClass::Pipettor => {
            let (w, h) = ((40.0 * a) as u32, (170.0 * b) as u32);
            let cx = f64::from(w) / 2.0;
            let hf = f64::from(h);
            draw(w, h, [70, 70, 80], |x, y| {
                (ellipse(x, y, cx, 8.0, 8.0, 8.0)
                    || rect(x, y, cx - 4.0, 8.0, cx + 4.0, 20.0)
                    || rect(x, y, 0.0, 20.0, f64::from(w), 20.0 + hf * 0.5)
                    || taper(x, y, cx, 20.0 + hf * 0.5, hf, 10.0, 1.5))
                .then(|| shade(x, cx, cx))
            })
        }
        ObjectClass::CentrifugeTestTube => {
            let (w, h) = ((36.0 * a) as u32, (130.0 * b) as u32);
            let cx = f64::from(w) / 2.0;
            let hf = f64::from(h);
            draw(w, h, [180, 60, 60], |x, y| {
                (rect(x, y, 0.0, 0.0, f64::from(w), 14.0)
                    || rect(x, y, cx - 15.0, 14.0, cx + 15.0, hf - 22.0)
                    || taper(x, y, cx, hf - 22.0, hf, 15.0, 3.0))
                .then(|| shade(x, cx, 15.0))
            })
        }
        ObjectClass::VacuumTestTube => {
            let (w, h) = ((32.0 * a) as u32, (125.0 * b) as u32);
            let cx = f64::from(w) / 2.0;
            let hf = f64::from(h);
            draw(w, h, [60, 110, 200], |x, y| {
                (rect(x, y, 0.0, 0.0, f64::from(w), 24.0)
                    || rect(x, y, cx - 13.0, 24.0, cx + 13.0, hf - 13.0)
                    || ellipse(x, y, cx, hf - 13.0, 13.0, 13.0))
                .then(|| shade(x, cx, 13.0))
            })
        }
        ObjectClass::Swab => {
            let (w, h) = ((18.0 * a) as u32, (160.0 * b) as u32);
            let cx = f64::from(w) / 2.0;
            let hf = f64::from(h);
            draw(w, h, [235, 225, 200], |x, y| {
                (ellipse(x, y, cx, 16.0, cx, 16.0) || rect(x, y, cx - 2.5, 16.0, cx + 2.5, hf))
                    .then(|| shade(x, cx, cx))
            })
        }
    };
    Cutout::new(class, img).expect("procedural silhouettes are nonempty")
}

/// Per-class pools of procedural cutouts, `variants` each.
pub fn procedural_cutouts(variants: usize) -> Vec<Vec<Cutout>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6375_746f);
    ObjectClass::ALL
        .iter()
        .map(|&c| {
            (0..variants)
                .map(|_| procedural_cutout(c, [rng.random_range(0.9..1.1), rng.random_range(0.9..1.1)]))
                .collect()
        })
        .collect()
}

/// Ten distinct procedural backgrounds of the given size.
pub fn procedural_backgrounds(width: u32, height: u32) -> Vec<RgbaImage> {
    (0..10u32)
        .map(|k| {
            let base = [
                [120, 110, 100],
                [200, 200, 190],
                [60, 80, 70],
                [150, 130, 160],
                [90, 90, 90],
                [210, 180, 140],
                [40, 50, 80],
                [170, 190, 200],
                [110, 140, 100],
                [230, 220, 230],
            ][k as usize];
            RgbaImage::from_fn(width, height, |x, y| {
                let v = match k % 5 {
                    0 => (x * 60 / width.max(1)) as i32 - 30,
                    1 => ((x / (8 + k) + y / (8 + k)) % 2) as i32 * 30 - 15,
                    2 => ((y / (6 + 2 * k)) % 2) as i32 * 24 - 12,
                    3 => (((x ^ y).wrapping_mul(2_654_435_761) >> 27) as i32) - 16,
                    _ => ((x + y) * 50 / (width + height).max(1)) as i32 - 25,
                };
                let c = |b: u8| (i32::from(b) + v).clamp(0, 255) as u8;
                Rgba([c(base[0]), c(base[1]), c(base[2]), 255])
            })
        })
        .collect()
}

fn read_png(path: &Path) -> Result<RgbaImage, DatasetError> {
    Ok(image::open(path)
        .map_err(|e| DatasetError::Image(format!("{}: {e}", path.display())))?
        .to_rgba8())
}

fn pngs_in(dir: &Path) -> Result<Vec<std::path::PathBuf>, DatasetError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads `<dir>/<class_name>/*.png` for every class.
pub fn load_cutouts(dir: &Path) -> Result<Vec<Vec<Cutout>>, DatasetError> {
    ObjectClass::ALL
        .iter()
        .map(|&class| {
            let sub = dir.join(class.name());
            let files = if sub.is_dir() { pngs_in(&sub)? } else { Vec::new() };
            if files.is_empty() {
                return Err(DatasetError::MissingAssets(format!(
                    "no cutouts for class `{}` in {}",
                    class.name(),
                    sub.display()
                )));
            }
            files
                .iter()
                .map(|f| {
                    Cutout::new(class, read_png(f)?).ok_or_else(|| {
                        DatasetError::MissingAssets(format!("{} has an empty alpha channel", f.display()))
                    })
                })
                .collect()
        })
        .collect()
}

pub fn load_backgrounds(dir: &Path) -> Result<Vec<RgbaImage>, DatasetError> {
    let files = if dir.is_dir() { pngs_in(dir)? } else { Vec::new() };
    if files.is_empty() {
        return Err(DatasetError::MissingAssets(format!(
            "no background images in {}",
            dir.display()
        )));
    }
    files.iter().map(|f| read_png(f)).collect()
}
