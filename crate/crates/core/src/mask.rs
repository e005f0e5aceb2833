//! Binary raster masks.

use serde::{Deserialize, Serialize};

/// Integer pixel rectangle, `x`/`y` are the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl PixelRect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        PixelRect { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.w && y < self.y + self.h
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.w > 0
            && self.h > 0
            && u64::from(self.x) + u64::from(self.w) <= u64::from(width)
            && u64::from(self.y) + u64::from(self.h) <= u64::from(height)
    }

    /// Center in continuous pixel coordinates where pixel `i` is centered at `i`.
    pub fn center(&self) -> (f64, f64) {
        (
            f64::from(self.x) + (f64::from(self.w) - 1.0) / 2.0,
            f64::from(self.y) + (f64::from(self.h) - 1.0) / 2.0,
        )
    }
}

/// Row-major boolean raster.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Mask({}x{}, {} set)", self.width, self.height, self.count())
    }
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Mask::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Option<Self> {
        (bits.len() == width as usize * height as usize).then_some(Mask {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.bits[(y * self.width + x) as usize]
    }

    /// Signed lookup; anything outside the raster is unset.
    #[inline]
    pub fn get_i(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && self.get(x as u32, y as u32)
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let i = (y * self.width + x) as usize;
        self.bits[i] = v;
    }

    pub fn count(&self) -> u64 {
        self.bits.iter().filter(|b| **b).count() as u64
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn same_size(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn intersection_count(&self, other: &Mask) -> u64 {
        debug_assert!(self.same_size(other));
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a && **b)
            .count() as u64
    }

    pub fn union_count(&self, other: &Mask) -> u64 {
        debug_assert!(self.same_size(other));
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a || **b)
            .count() as u64
    }

    pub fn union_with(&mut self, other: &Mask) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    pub fn subtract(&mut self, other: &Mask) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a &= !*b;
        }
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    pub fn is_disjoint(&self, other: &Mask) -> bool {
        self.intersection_count(other) == 0
    }

    /// Tight bounding rectangle of the set pixels.
    pub fn bbox(&self) -> Option<PixelRect> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        any.then(|| PixelRect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    /// Mean pixel coordinate of the set pixels.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0u64);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += f64::from(x);
                    sy += f64::from(y);
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Copies the sub-rectangle `rect` into a new mask.
    pub fn crop(&self, rect: PixelRect) -> Mask {
        Mask::from_fn(rect.w, rect.h, |x, y| self.get(rect.x + x, rect.y + y))
    }

    /// Pastes `local` (whose origin sits at `(ox, oy)`) into a mask of the
    /// given size.
    pub fn embed(local: &Mask, ox: u32, oy: u32, width: u32, height: u32) -> Mask {
        let mut m = Mask::new(width, height);
        for y in 0..local.height {
            for x in 0..local.width {
                if local.get(x, y) && ox + x < width && oy + y < height {
                    m.set(ox + x, oy + y, true);
                }
            }
        }
        m
    }

    /// Labels 4-connected components; returns one mask per component in
    /// raster order of their first pixel.
    pub fn components(&self) -> Vec<Mask> {
        let w = self.width as usize;
        let mut label = vec![usize::MAX; self.bits.len()];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in 0..self.bits.len() {
            if !self.bits[start] || label[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut comp = Mask::new(self.width, self.height);
            label[start] = id;
            stack.push(start);
            while let Some(i) = stack.pop() {
                comp.bits[i] = true;
                let (x, y) = (i % w, i / w);
                let mut visit = |j: usize| {
                    if self.bits[j] && label[j] == usize::MAX {
                        label[j] = id;
                        stack.push(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - w);
                }
                if y + 1 < self.height as usize {
                    visit(i + w);
                }
            }
            out.push(comp);
        }
        out
    }
}
