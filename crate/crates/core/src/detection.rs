//! Instance detections as produced by a segmentation network (or the
//! simulator's oracle) and consumed by pose estimation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classes::ObjectClass;
use crate::mask::{Mask, PixelRect};

/// Which part of the object a detection covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Full,
    Top,
    Bottom,
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Part::Full => "full",
            Part::Top => "top",
            Part::Bottom => "bottom",
        })
    }
}

impl FromStr for Part {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(Part::Full),
            "top" => Ok(Part::Top),
            "bottom" => Ok(Part::Bottom),
            other => Err(format!("unknown part `{other}`")),
        }
    }
}

/// A detection. The mask is bbox-sized: pixel `(x, y)` of the mask is frame
/// pixel `(bbox.x + x, bbox.y + y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: ObjectClass,
    pub confidence: f64,
    pub bbox: PixelRect,
    pub mask: Mask,
    pub part: Part,
}

impl Detection {
    /// Builds a detection from a frame-sized mask; `None` if the mask is empty.
    pub fn from_frame_mask(class: ObjectClass, confidence: f64, part: Part, mask: &Mask) -> Option<Self> {
        let bbox = mask.bbox()?;
        Some(Detection {
            class,
            confidence,
            bbox,
            mask: mask.crop(bbox),
            part,
        })
    }

    /// Frame-sized copy of the mask.
    pub fn frame_mask(&self, width: u32, height: u32) -> Mask {
        Mask::embed(&self.mask, self.bbox.x, self.bbox.y, width, height)
    }

    /// Checks the structural invariants against a frame size.
    pub fn validate(&self, width: u32, height: u32) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0, 1]", self.confidence));
        }
        if !self.bbox.fits_in(width, height) {
            return Err(format!("bbox {:?} outside {width}x{height} frame", self.bbox));
        }
        if self.mask.width() != self.bbox.w || self.mask.height() != self.bbox.h {
            return Err("mask size differs from bbox size".into());
        }
        if self.mask.is_empty() {
            return Err("mask is empty".into());
        }
        Ok(())
    }

    /// Iterates the frame coordinates of the mask pixels.
    pub fn mask_pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let b = self.bbox;
        (0..b.h).flat_map(move |y| {
            (0..b.w).filter_map(move |x| self.mask.get(x, y).then_some((b.x + x, b.y + y)))
        })
    }
}

#[derive(Debug, Error)]
pub enum DetectionFileError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Run lengths of a mask in row-major order, starting with a run of zeros
/// (possibly of length zero).
pub fn rle_encode(mask: &Mask) -> Vec<u64> {
    let mut runs = Vec::new();
    let mut cur = false;
    let mut n = 0u64;
    for &b in mask.bits() {
        if b != cur {
            runs.push(n);
            cur = b;
            n = 0;
        }
        n += 1;
    }
    runs.push(n);
    runs
}

pub fn rle_decode(runs: &[u64], width: u32, height: u32) -> Option<Mask> {
    let total = u64::from(width) * u64::from(height);
    if runs.iter().try_fold(0u64, |a, r| a.checked_add(*r))? != total {
        return None;
    }
    let mut bits = Vec::with_capacity(total as usize);
    for (i, r) in runs.iter().enumerate() {
        bits.extend(std::iter::repeat_n(i % 2 == 1, *r as usize));
    }
    Mask::from_bits(width, height, bits)
}

/// One detection per line: `class confidence x y w h part rle`, where `rle`
/// is the comma-separated run lengths of the bbox-local mask.
pub fn format_detection(d: &Detection) -> String {
    let rle: Vec<String> = rle_encode(&d.mask).iter().map(u64::to_string).collect();
    format!(
        "{} {} {} {} {} {} {} {}",
        d.class.name(),
        d.confidence,
        d.bbox.x,
        d.bbox.y,
        d.bbox.w,
        d.bbox.h,
        d.part,
        rle.join(",")
    )
}

pub fn parse_detection(line: &str) -> Result<Detection, String> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != 8 {
        return Err(format!("expected 8 fields, found {}", f.len()));
    }
    let class: ObjectClass = f[0].parse().map_err(|e| format!("{e}"))?;
    let confidence: f64 = f[1].parse().map_err(|_| format!("bad confidence `{}`", f[1]))?;
    let num = |s: &str| s.parse::<u32>().map_err(|_| format!("bad integer `{s}`"));
    let bbox = PixelRect::new(num(f[2])?, num(f[3])?, num(f[4])?, num(f[5])?);
    let part: Part = f[6].parse()?;
    let runs = f[7]
        .split(',')
        .map(|r| r.parse::<u64>().map_err(|_| format!("bad run length `{r}`")))
        .collect::<Result<Vec<_>, _>>()?;
    let mask = rle_decode(&runs, bbox.w, bbox.h).ok_or("run lengths do not cover the bbox")?;
    let det = Detection {
        class,
        confidence,
        bbox,
        mask,
        part,
    };
    if !(0.0..=1.0).contains(&det.confidence) {
        return Err(format!("confidence {} outside [0, 1]", det.confidence));
    }
    if det.mask.is_empty() {
        return Err("mask is empty".into());
    }
    Ok(det)
}

/// Parses a detection file. Blank lines and lines starting with `#` are skipped.
pub fn read_detections(r: impl std::io::BufRead) -> Result<Vec<Detection>, DetectionFileError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(parse_detection(t).map_err(|msg| DetectionFileError::Parse { line: i + 1, msg })?);
    }
    Ok(out)
}

pub fn write_detections(dets: &[Detection], mut w: impl std::io::Write) -> std::io::Result<()> {
    for d in dets {
        writeln!(w, "{}", format_detection(d))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Detection {
        let m = Mask::from_fn(20, 10, |x, y| (3..9).contains(&x) && (2..7).contains(&y) && x != 5);
        Detection::from_frame_mask(ObjectClass::Swab, 0.75, Part::Top, &m).unwrap()
    }

    #[test]
    fn rle_round_trip() {
        let m = Mask::from_fn(7, 3, |x, y| (x + y) % 3 == 0);
        let r = rle_encode(&m);
        assert_eq!(r[0], 0);
        assert_eq!(rle_decode(&r, 7, 3).unwrap(), m);
        assert!(rle_decode(&r, 7, 4).is_none());
    }

    #[test]
    fn from_frame_mask_crops_to_bbox() {
        let d = sample();
        assert_eq!(d.bbox, PixelRect::new(3, 2, 6, 5));
        assert!(d.validate(20, 10).is_ok());
        assert_eq!(d.frame_mask(20, 10).count(), 25);
        assert_eq!(d.mask_pixels().count(), 25);
        assert!(d.validate(5, 5).is_err());
    }

    #[test]
    fn file_round_trip() {
        let d = sample();
        let mut buf = Vec::new();
        write_detections(&[d.clone(), d.clone()], &mut buf).unwrap();
        let text = format!("# header\n\n{}", String::from_utf8(buf).unwrap());
        let back = read_detections(text.as_bytes()).unwrap();
        assert_eq!(back, vec![d.clone(), d]);
    }

    #[test]
    fn bad_line_reports_number() {
        let text = "swab 0.5 0 0 2 1 full 1,1\nswab 0.5 0 0 2 1 full 1,2\n";
        match read_detections(text.as_bytes()) {
            Err(DetectionFileError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_detection("swab 1.5 0 0 1 1 full 0,1").is_err());
        assert!(parse_detection("swab 0.5 0 0 1 1 full 1").is_err());
        assert!(parse_detection("spoon 0.5 0 0 1 1 full 0,1").is_err());
    }
}
