//! Mask boundary tracing into lattice polygons and the inverse rasterizer.
//!
//! Polygons run along pixel edges, so vertex `(x, y)` is the top-left corner
//! of pixel `(x, y)`. Each 4-connected component becomes one polygon; its
//! holes are spliced into the outer ring with zero-width bridges, so even-odd
//! filling at pixel centers reproduces the component exactly.

use std::collections::HashMap;

use crate::mask::Mask;

pub type Ring = Vec<(i64, i64)>;

/// Directed boundary edges of `mask`, oriented clockwise on screen
/// (interior on the right when walking with y pointing down).
fn boundary_edges(mask: &Mask) -> Vec<((i64, i64), (i64, i64))> {
    let mut edges = Vec::new();
    let Some(b) = mask.bbox() else { return edges };
    for y in b.y..b.y + b.h {
        for x in b.x..b.x + b.w {
            if !mask.get(x, y) {
                continue;
            }
            let (xi, yi) = (i64::from(x), i64::from(y));
            if !mask.get_i(xi, yi - 1) {
                edges.push(((xi, yi), (xi + 1, yi)));
            }
            if !mask.get_i(xi + 1, yi) {
                edges.push(((xi + 1, yi), (xi + 1, yi + 1)));
            }
            if !mask.get_i(xi, yi + 1) {
                edges.push(((xi + 1, yi + 1), (xi, yi + 1)));
            }
            if !mask.get_i(xi - 1, yi) {
                edges.push(((xi, yi + 1), (xi, yi)));
            }
        }
    }
    edges
}

/// Links directed edges into closed rings. At a vertex shared by two
/// diagonal pixels the walk turns toward the pixel it came around.
fn link_rings(edges: &[((i64, i64), (i64, i64))]) -> Vec<Ring> {
    let mut out_of: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, (a, _)) in edges.iter().enumerate() {
        out_of.entry(*a).or_default().push(i);
    }
    let mut used = vec![false; edges.len()];
    let mut rings = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        let mut ring = Vec::new();
        let mut e = start;
        loop {
            used[e] = true;
            let (a, b) = edges[e];
            ring.push(a);
            let dir = (b.0 - a.0, b.1 - a.1);
            let cands = &out_of[&b];
            let next = cands
                .iter()
                .copied()
                .filter(|&c| !used[c])
                .max_by_key(|&c| {
                    let (p, q) = edges[c];
                    let d = (q.0 - p.0, q.1 - p.1);
                    dir.0 * d.1 - dir.1 * d.0
                });
            match next {
                Some(n) => e = n,
                None => break,
            }
        }
        rings.push(simplify(ring));
    }
    rings
}

/// Drops vertices where the ring continues straight on.
fn simplify(ring: Ring) -> Ring {
    let n = ring.len();
    if n < 4 {
        return ring;
    }
    (0..n)
        .filter(|&i| {
            let p = ring[(i + n - 1) % n];
            let c = ring[i];
            let q = ring[(i + 1) % n];
            (c.0 - p.0) * (q.1 - c.1) - (c.1 - p.1) * (q.0 - c.0) != 0
        })
        .map(|i| ring[i])
        .collect()
}

/// One polygon per 4-connected component, each a single ring with holes
/// bridged in. Components are ordered by their topmost-leftmost pixel.
pub fn trace_polygons(mask: &Mask) -> Vec<Ring> {
    mask.components()
        .iter().map(|c| splice(link_rings(&boundary_edges(c)))).collect()
}

fn splice(mut rings: Vec<Ring>) -> Ring {
    // the lexicographically smallest (y, x) vertex lies on the outer ring
    let outer = (0..rings.len())
        .min_by_key(|&i| rings[i].iter().map(|&(x, y)| (y, x)).min())
        .expect("component has a boundary");
    let mut ring = rings.swap_remove(outer);
    let o0 = ring[0];
    let mut spliced = vec![o0];
    for hole in rings {
        spliced.extend(hole.iter().copied());
        spliced.push(hole[0]);
        spliced.push(o0);
    }
    spliced.extend(ring.drain(1..));
    spliced
}

pub fn ring_to_coco(ring: &Ring) -> Vec<f64> {
    ring.iter().flat_map(|&(x, y)| [x as f64, y as f64]).collect()
}

/// Signed shoelace area of a flat `[x0, y0, x1, y1, ...]` polygon; positive
/// for the orientation produced by [`trace_polygons`].
pub fn polygon_area(poly: &[f64]) -> f64 {
    let n = poly.len() / 2;
    let mut s = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        s += poly[2 * i] * poly[2 * j + 1] - poly[2 * j] * poly[2 * i + 1];
    }
    s / 2.0
}

/// `[x, y, w, h]` spanned by the polygon vertices.
pub fn polygons_bbox(polys: &[Vec<f64>]) -> Option<[f64; 4]> {
    let mut it = polys.iter().flat_map(|p| p.chunks_exact(2));
    let first = it.next()?;
    let (mut x0, mut y0, mut x1, mut y1) = (first[0], first[1], first[0], first[1]);
    for p in it {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    Some([x0, y0, x1 - x0, y1 - y0])
}

/// Even-odd fill of each polygon at pixel centers, unioned across polygons.
pub fn rasterize_polygons(polys: &[Vec<f64>], width: u32, height: u32) -> Mask {
    let mut mask = Mask::new(width, height);
    let mut xs = Vec::new();
    for poly in polys {
        let n = poly.len() / 2;
        if n < 3 {
            continue;
        }
        for row in 0..height {
            let yc = f64::from(row) + 0.5;
            xs.clear();
            for i in 0..n {
                let j = (i + 1) % n;
                let (xa, ya, xb, yb) = (poly[2 * i], poly[2 * i + 1], poly[2 * j], poly[2 * j + 1]);
                if (ya <= yc) != (yb <= yc) {
                    xs.push(xa + (yc - ya) * (xb - xa) / (yb - ya));
                }
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks_exact(2) {
                // pixel centers x + 0.5 inside [pair[0], pair[1])
                let lo = (pair[0] - 0.5).ceil().max(0.0);
                let hi = (pair[1] - 0.5).ceil().min(f64::from(width));
                let mut x = lo;
                while x < hi {
                    mask.set(x as u32, row, true);
                    x += 1.0;
                }
            }
        }
    }
    mask
}
