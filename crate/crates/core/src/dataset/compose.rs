//! Compositing cutouts onto a background with occlusion resolution.

use image::RgbaImage;
use rand::seq::SliceRandom;
use rand::Rng;

use super::augment::{augment, Transform};
use super::cutout::Cutout;
use super::DatasetError;
use crate::classes::ObjectClass;
use crate::mask::Mask;

pub const MAX_PLACEMENT_RETRIES: usize = 20;
/// Minimum visible fraction of an instance's full mask.
pub const MIN_VISIBLE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedInstance {
    pub class: ObjectClass,
    pub transform: Transform,
    /// Canvas position of the transformed cutout's top-left corner.
    pub offset: (u32, u32),
    /// Canvas-sized mask before occlusion.
    pub full: Mask,
    /// Canvas-sized mask after occlusion.
    pub visible: Mask,
    /// 0 is the bottom layer.
    pub z: usize,
}

/// Visible masks for full masks given bottom-to-top: each keeps what no
/// higher mask covers.
pub fn resolve_occlusions(full_by_z: &[&Mask]) -> Vec<Mask> {
    let mut out: Vec<Mask> = full_by_z.iter().map(|m| (*m).clone()).collect();
    let Some(top) = full_by_z.last() else {
        return out;
    };
    let mut above = Mask::new(top.width(), top.height());
    for i in (0..out.len()).rev() {
        out[i].subtract(&above);
        above.union_with(full_by_z[i]);
    }
    out
}

/// Indices of instances whose visible share is below the threshold.
pub fn occlusion_failures(instances: &[PlacedInstance]) -> Vec<usize> {
    instances
        .iter()
        .enumerate()
        .filter(|(_, p)| (p.visible.count() as f64) < MIN_VISIBLE_FRACTION * p.full.count() as f64 || p.visible.is_empty())
        .map(|(i, _)| i)
        .collect()
}

fn random_offset(c: &Cutout, w: u32, h: u32, rng: &mut impl Rng) -> (u32, u32) {
    (rng.random_range(0..=w - c.width()), rng.random_range(0..=h - c.height()))
}

fn recompute_visible(instances: &mut [PlacedInstance]) {
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.sort_by_key(|&i| instances[i].z);
    let vis = resolve_occlusions(&order.iter().map(|&i| &instances[i].full).collect::<Vec<_>>());
    for (k, &i) in order.iter().enumerate() {
        instances[i].visible = vis[k].clone();
    }
}

#[derive(Debug, Clone)]
pub struct Composition {
    pub image: RgbaImage,
    /// In the order of the input cutouts.
    pub instances: Vec<PlacedInstance>,
}

/// Places each cutout (augmented) at a random position fully inside the
/// background, in random z-order. Instances that end up less than 10 %
/// visible are moved, up to 20 times.
pub fn compose_image(
    background: &RgbaImage,
    cutouts: &[&Cutout],
    rng: &mut impl Rng,
) -> Result<Composition, DatasetError> {
    for (i, a) in cutouts.iter().enumerate() {
        if cutouts[..i].iter().any(|b| b.class == a.class) {
            return Err(DatasetError::DuplicateClass(a.class));
        }
    }
    let (w, h) = background.dimensions();
    let mut z: Vec<usize> = (0..cutouts.len()).collect();
    z.shuffle(rng);

    let mut placed: Vec<(Cutout, PlacedInstance)> = Vec::with_capacity(cutouts.len());
    for (i, src) in cutouts.iter().enumerate() {
        let mut attempt = 0;
        let (cut, t) = loop {
            match augment(src, rng) {
                Ok((c, t)) if c.width() <= w && c.height() <= h => break (c, t),
                _ if attempt < MAX_PLACEMENT_RETRIES => attempt += 1,
                _ => return Err(DatasetError::PlacementFailed(src.class)),
            }
        };
        let offset = random_offset(&cut, w, h, rng);
        let full = Mask::embed(&cut.mask(), offset.0, offset.1, w, h);
        placed.push((
            cut,
            PlacedInstance {
                class: src.class,
                transform: t,
                offset,
                visible: full.clone(),
                full,
                z: z[i],
            },
        ));
    }

    let mut instances: Vec<PlacedInstance> = placed.iter().map(|(_, p)| p.clone()).collect();
    recompute_visible(&mut instances);
    let mut retries = 0;
    loop {
        let failing = occlusion_failures(&instances);
        let Some(&first) = failing.first() else { break };
        if retries == MAX_PLACEMENT_RETRIES {
            return Err(DatasetError::PlacementFailed(instances[first].class));
        }
        retries += 1;
        for i in failing {
            let cut = &placed[i].0;
            let offset = random_offset(cut, w, h, rng);
            instances[i].offset = offset;
            instances[i].full = Mask::embed(&cut.mask(), offset.0, offset.1, w, h);
        }
        recompute_visible(&mut instances);
    }

    let mut image = background.clone();
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.sort_by_key(|&i| instances[i].z);
    for i in order {
        let (cut, p) = (&placed[i].0, &instances[i]);
        for (x, y, px) in cut.image.enumerate_pixels() {
            if px[3] > 0 {
                image.put_pixel(p.offset.0 + x, p.offset.1 + y, image::Rgba([px[0], px[1], px[2], 255]));
            }
        }
    }
    Ok(Composition { image, instances })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::cutout::{procedural_backgrounds, procedural_cutouts};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn square(x: u32, y: u32, s: u32) -> Mask {
        Mask::from_fn(20, 20, |i, j| (x..x + s).contains(&i) && (y..y + s).contains(&j))
    }

    #[test]
    fn disjoint_masks_stay_full() {
        let (a, b) = (square(0, 0, 5), square(10, 10, 5));
        let v = resolve_occlusions(&[&a, &b]);
        assert_eq!(v, vec![a, b]);
    }

    #[test]
    fn stacked_identical_masks_leave_only_top() {
        let a = square(3, 3, 6);
        let v = resolve_occlusions(&[&a, &a, &a]);
        assert!(v[0].is_empty() && v[1].is_empty());
        assert_eq!(v[2], a);
    }

    #[test]
    fn occlusion_conserves_pixels() {
        let ms = [square(0, 0, 8), square(4, 4, 8), square(6, 0, 8)];
        let v = resolve_occlusions(&ms.iter().collect::<Vec<_>>());
        let mut fu = Mask::new(20, 20);
        let mut vu = Mask::new(20, 20);
        for (f, vis) in ms.iter().zip(&v) {
            assert!(vis.is_subset_of(f));
            fu.union_with(f);
            vu.union_with(vis);
        }
        assert_eq!(fu, vu);
        for i in 0..3 {
            for j in i + 1..3 {
                assert!(v[i].is_disjoint(&v[j]));
            }
        }
    }

    #[test]
    fn fully_covered_instance_flagged_for_retry() {
        let inst = |m: Mask, z| PlacedInstance {
            class: ObjectClass::Swab,
            transform: Transform::IDENTITY,
            offset: (0, 0),
            visible: m.clone(),
            full: m,
            z,
        };
        let mut v = vec![inst(square(4, 4, 4), 0), inst(square(2, 2, 10), 1)];
        recompute_visible(&mut v);
        assert_eq!(occlusion_failures(&v), vec![0]);
    }

    #[test]
    fn single_instance_is_fully_visible() {
        let pool = procedural_cutouts(1);
        let bg = &procedural_backgrounds(256, 256)[0];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = compose_image(bg, &[&pool[2][0]], &mut rng).unwrap();
        assert_eq!(c.instances.len(), 1);
        assert_eq!(c.instances[0].visible, c.instances[0].full);
    }

    #[test]
    fn eight_class_composition_invariants() {
        let pool = procedural_cutouts(1);
        let bgs = procedural_backgrounds(512, 512);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..4 {
            let cuts: Vec<&Cutout> = pool.iter().map(|v| &v[0]).collect();
            let c = compose_image(&bgs[1], &cuts, &mut rng).unwrap();
            let mut zs: Vec<usize> = c.instances.iter().map(|p| p.z).collect();
            zs.sort();
            assert_eq!(zs, (0..8).collect::<Vec<_>>());
            for (i, p) in c.instances.iter().enumerate() {
                assert!(p.visible.is_subset_of(&p.full));
                assert!(p.visible.count() as f64 >= 0.1 * p.full.count() as f64);
                for q in &c.instances[i + 1..] {
                    assert!(p.visible.is_disjoint(&q.visible));
                }
            }
        }
    }

    #[test]
    fn duplicate_classes_rejected() {
        let pool = procedural_cutouts(1);
        let bg = &procedural_backgrounds(64, 64)[0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            compose_image(bg, &[&pool[0][0], &pool[0][0]], &mut rng),
            Err(DatasetError::DuplicateClass(_))
        ));
    }
}
