//! Simulated coarse initializer: body-only coverage plus local geodesic
//! jitter, standing in for an external embedding model.

use std::collections::HashMap;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::Mask;
use crate::mesh::coloring::BACKGROUND;
use crate::mesh::Surface;

/// Erodes `mask` by `erosion_px`, then replaces each surviving pixel's GT
/// vertex with a uniformly drawn vertex within `noise_gap` mean edge lengths
/// of geodesic distance. Everything else is background.
pub fn simulate_coarse_init(
    corr_gt: &RgbImage,
    mask: &Mask,
    erosion_px: u32,
    noise_gap: u32,
    seed: u64,
    surface: &Surface,
) -> RgbImage {
    let kept = mask.erode(erosion_px);
    let radius = (noise_gap as f64 * surface.mean_edge_length()) as f32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut neighborhoods: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut out = RgbImage::from_pixel(corr_gt.width(), corr_gt.height(), Rgb(BACKGROUND));
    for (x, y) in kept.pixels() {
        let Some(v) = surface.decode(corr_gt.get_pixel(x, y).0) else {
            continue;
        };
        let color = if noise_gap == 0 {
            surface.color(v)
        } else {
            let near = neighborhoods
                .entry(v)
                .or_insert_with(|| surface.geodesics.within(v, radius));
            surface.color(near[rng.random_range(0..near.len())])
        };
        out.put_pixel(x, y, Rgb(color));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{icosphere, Surface};

    fn disk_sample(surface: &Surface) -> (RgbImage, Mask) {
        let mask = Mask::from_fn(16, 16, |x, y| {
            let (dx, dy) = (x as f64 - 7.5, y as f64 - 7.5);
            dx * dx + dy * dy <= 36.0
        });
        let n = surface.coloring.len();
        let corr = RgbImage::from_fn(16, 16, |x, y| {
            if mask.get(x, y) {
                Rgb(surface.color(((x * 16 + y) as usize) % n))
            } else {
                Rgb(BACKGROUND)
            }
        });
        (corr, mask)
    }

    #[test]
    fn no_erosion_no_noise_is_identity() {
        let s = Surface::new(icosphere(2)).unwrap();
        let (corr, mask) = disk_sample(&s);
        assert_eq!(simulate_coarse_init(&corr, &mask, 0, 0, 3, &s), corr);
    }

    #[test]
    fn large_erosion_clears_everything() {
        let s = Surface::new(icosphere(2)).unwrap();
        let (corr, mask) = disk_sample(&s);
        let init = simulate_coarse_init(&corr, &mask, 7, 2, 3, &s);
        assert!(init.pixels().all(|p| p.0 == BACKGROUND));
    }

    #[test]
    fn erosion_two_matches_window_oracle() {
        let s = Surface::new(icosphere(2)).unwrap();
        let (corr, mask) = disk_sample(&s);
        let init = simulate_coarse_init(&corr, &mask, 2, 0, 3, &s);
        let mut expect = 0;
        for y in 0..16i64 {
            for x in 0..16i64 {
                if (y - 2..=y + 2).all(|yy| (x - 2..=x + 2).all(|xx| mask.get_signed(xx, yy))) {
                    expect += 1;
                }
            }
        }
        assert_eq!(init.pixels().filter(|p| p.0 != BACKGROUND).count(), expect);
    }

    #[test]
    fn noise_stays_within_radius() {
        let s = Surface::new(icosphere(2)).unwrap();
        let (corr, mask) = disk_sample(&s);
        let gap = 2;
        let init = simulate_coarse_init(&corr, &mask, 0, gap, 9, &s);
        let radius = (gap as f64 * s.mean_edge_length()) as f32;
        for (x, y) in mask.pixels() {
            let v = s.decode(corr.get_pixel(x, y).0).unwrap();
            let w = s.decode(init.get_pixel(x, y).0).unwrap();
            assert!(s.geodesics.get(v, w) <= radius);
        }
        assert_eq!(init, simulate_coarse_init(&corr, &mask, 0, gap, 9, &s));
    }
}
