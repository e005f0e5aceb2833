//! COCO instance-segmentation records.

use serde::{Deserialize, Serialize};

use super::polygon::rasterize_polygons;
use crate::classes::ObjectClass;
use crate::mask::Mask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
    pub supercategory: String,
}

/// Run-length counts: plain integers or the compact string form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RleCounts {
    Plain(Vec<u64>),
    Compressed(String),
}

/// Column-major run-length mask; `size` is `[height, width]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rle {
    pub size: [u32; 2],
    pub counts: RleCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Segmentation {
    Polygons(Vec<Vec<f64>>),
    Rle(Rle),
}

impl Segmentation {
    /// Rasterizes to a `width` x `height` mask.
    pub fn to_mask(&self, width: u32, height: u32) -> Result<Mask, String> {
        match self {
            Segmentation::Polygons(p) => Ok(rasterize_polygons(p, width, height)),
            Segmentation::Rle(r) => {
                if r.size != [height, width] {
                    return Err(format!(
                        "rle size {:?} does not match image {}x{}",
                        r.size, width, height
                    ));
                }
                rle_to_mask(r)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    pub segmentation: Segmentation,
    pub bbox: [f64; 4],
    pub area: f64,
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CocoDataset {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

impl CocoDataset {
    pub fn image(&self, id: u64) -> Option<&CocoImage> {
        self.images.iter().find(|i| i.id == id)
    }

    /// Referential checks: every annotation points at a known image and
    /// category, and ids are unique.
    pub fn validate(&self) -> Result<(), String> {
        let mut img_ids: Vec<u64> = self.images.iter().map(|i| i.id).collect();
        img_ids.sort_unstable();
        if img_ids.windows(2).any(|w| w[0] == w[1]) {
            return Err("duplicate image id".into());
        }
        let mut ann_ids: Vec<u64> = self.annotations.iter().map(|a| a.id).collect();
        ann_ids.sort_unstable();
        if ann_ids.windows(2).any(|w| w[0] == w[1]) {
            return Err("duplicate annotation id".into());
        }
        for a in &self.annotations {
            if img_ids.binary_search(&a.image_id).is_err() {
                return Err(format!("annotation {} references unknown image {}", a.id, a.image_id));
            }
            if !self.categories.iter().any(|c| c.id == a.category_id) {
                return Err(format!(
                    "annotation {} references unknown category {}",
                    a.id, a.category_id
                ));
            }
        }
        Ok(())
    }
}

pub fn categories() -> Vec<CocoCategory> {
    ObjectClass::ALL
        .iter()
        .map(|c| CocoCategory {
            id: c.category_id(),
            name: c.name().to_string(),
            supercategory: "lab_tool".to_string(),
        })
        .collect()
}

/// Column-major run lengths starting with a zero run.
pub fn mask_to_rle_counts(mask: &Mask) -> Vec<u64> {
    let mut runs = Vec::new();
    let (mut cur, mut n) = (false, 0u64);
    for x in 0..mask.width() {
        for y in 0..mask.height() {
            let b = mask.get(x, y);
            if b != cur {
                runs.push(n);
                cur = b;
                n = 0;
            }
            n += 1;
        }
    }
    runs.push(n);
    runs
}

pub fn mask_to_rle(mask: &Mask, compressed: bool) -> Rle {
    let counts = mask_to_rle_counts(mask);
    Rle {
        size: [mask.height(), mask.width()],
        counts: if compressed {
            RleCounts::Compressed(compress_counts(&counts))
        } else {
            RleCounts::Plain(counts)
        },
    }
}

pub fn rle_to_mask(r: &Rle) -> Result<Mask, String> {
    let [h, w] = r.size;
    let counts = match &r.counts {
        RleCounts::Plain(c) => c.clone(),
        RleCounts::Compressed(s) => decompress_counts(s)?,
    };
    let total = u64::from(w) * u64::from(h);
    let sum = counts.iter().try_fold(0u64, |a, c| a.checked_add(*c)).ok_or("rle overflow")?;
    if sum != total {
        return Err(format!("rle covers {sum} pixels, expected {total}"));
    }
    let mut mask = Mask::new(w, h);
    let mut i = 0u64;
    for (k, c) in counts.iter().enumerate() {
        if k % 2 == 1 {
            for j in i..i + c {
                mask.set((j / u64::from(h)) as u32, (j % u64::from(h)) as u32, true);
            }
        }
        i += c;
    }
    Ok(mask)
}

/// The compact counts string: each count (delta-coded against the count two
/// back from the third on) is written as 5-bit groups with a continuation bit,
/// offset by 48 into printable ASCII.
pub fn compress_counts(counts: &[u64]) -> String {
    let mut s = String::new();
    for (i, &c) in counts.iter().enumerate() {
        let mut x = c as i64;
        if i > 2 {
            x -= counts[i - 2] as i64;
        }
        loop {
            let mut ch = x & 0x1f;
            x >>= 5;
            let more = if ch & 0x10 != 0 { x != -1 } else { x != 0 };
            if more {
                ch |= 0x20;
            }
            s.push((ch as u8 + 48) as char);
            if !more {
                break;
            }
        }
    }
    s
}

pub fn decompress_counts(s: &str) -> Result<Vec<u64>, String> {
    let bytes = s.as_bytes();
    let mut counts: Vec<u64> = Vec::new();
    let mut p = 0;
    while p < bytes.len() {
        let (mut x, mut k) = (0i64, 0u32);
        loop {
            let b = *bytes.get(p).ok_or("truncated rle string")?;
            if !(48..48 + 64).contains(&b) {
                return Err(format!("invalid rle character {:?}", b as char));
            }
            let c = i64::from(b) - 48;
            x |= (c & 0x1f) << (5 * k);
            let more = c & 0x20 != 0;
            p += 1;
            k += 1;
            if k > 12 {
                return Err("rle count too long".into());
            }
            if !more {
                if c & 0x10 != 0 {
                    x |= -1i64 << (5 * k);
                }
                break;
            }
        }
        let m = counts.len();
        if m > 2 {
            x += counts[m - 2] as i64;
        }
        if x < 0 {
            return Err("negative rle count".into());
        }
        counts.push(x as u64);
    }
    Ok(counts)
}
