//! Spatial and photometric augmentation. Every spatial recipe applies one
//! nearest-neighbour map to all image-like fields at once, so labels are
//! never blended.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::shading::BACKGROUND_RGB;
use super::{Annotation, Sample};
use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::mesh::coloring::BACKGROUND;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    Identity,
    /// Square crop around the upper half of the silhouette, rescaled to the
    /// original size.
    UpperCrop,
    /// Composite of the sample with `k - 1` companions.
    MultiPerson(usize),
    /// Rotation about the image center, degrees counter-clockwise.
    Rotate(f64),
    /// Hue rotation of the RGB image, degrees.
    HueShift(i32),
}

/// Applies `recipe`. `companions` supply the extra people for
/// [`Recipe::MultiPerson`] and are ignored otherwise.
pub fn augment(sample: &Sample, companions: &[Sample], recipe: Recipe, seed: u64) -> Result<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match recipe {
        Recipe::Identity => Ok(sample.clone()),
        Recipe::HueShift(deg) => Ok(Sample {
            rgb: image::imageops::huerotate(&sample.rgb, deg),
            ..sample.clone()
        }),
        Recipe::Rotate(deg) => {
            let (w, h) = (sample.width() as f64, sample.height() as f64);
            let (s, c) = deg.to_radians().sin_cos();
            let (cx, cy) = (w / 2.0, h / 2.0);
            // Inverse map: target pixel center rotated back into the source.
            Ok(remap(sample, |x, y| {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                // Image y points down, so counter-clockwise flips the sign.
                let sx = c * dx - s * dy + cx;
                let sy = s * dx + c * dy + cy;
                pixel_of(sx, sy, w, h)
            }))
        }
        Recipe::UpperCrop => {
            let (x0, y0, x1, y1) = sample.mask.bbox().ok_or(Error::EmptyCrop)?;
            let body_h = (y1 - y0 + 1) as f64;
            let side = (body_h * rng.random_range(0.45..0.6)).max((x1 - x0 + 1) as f64 * 0.5).max(8.0);
            let cx = (x0 + x1 + 1) as f64 / 2.0 + rng.random_range(-0.05..0.05) * side;
            let top = y0 as f64 - rng.random_range(0.0..0.08) * side;
            let left = cx - side / 2.0;
            let (w, h) = (sample.width() as f64, sample.height() as f64);
            let out = remap(sample, |x, y| {
                let sx = left + (x as f64 + 0.5) / w * side;
                let sy = top + (y as f64 + 0.5) / h * side;
                pixel_of(sx, sy, w, h)
            });
            if out.mask.is_empty() {
                return Err(Error::EmptyCrop);
            }
            Ok(out)
        }
        Recipe::MultiPerson(k) => {
            if k < 1 || companions.len() + 1 < k {
                return Err(Error::Config(format!(
                    "multi-person composite of {k} needs {} companions, got {}",
                    k.saturating_sub(1),
                    companions.len()
                )));
            }
            let people: Vec<&Sample> = std::iter::once(sample).chain(&companions[..k - 1]).collect();
            let (w, h) = (sample.width() as f64, sample.height() as f64);
            let placed: Vec<Sample> = people
                .iter()
                .map(|p| {
                    let dx = rng.random_range(-w / 3.0..w / 3.0).round();
                    let dy = rng.random_range(-h / 8.0..h / 8.0).round();
                    remap(p, |x, y| pixel_of(x as f64 + 0.5 - dx, y as f64 + 0.5 - dy, w, h))
                })
                .collect();
            Ok(composite(&placed))
        }
    }
}

fn pixel_of(sx: f64, sy: f64, w: f64, h: f64) -> Option<(u32, u32)> {
    (sx >= 0.0 && sy >= 0.0 && sx < w && sy < h).then(|| (sx as u32, sy as u32))
}

/// Resamples every field with the inverse map `source(x, y)`. Annotations
/// move to the first target pixel (raster order) that samples them and are
/// dropped when none does.
pub fn remap(sample: &Sample, source: impl Fn(u32, u32) -> Option<(u32, u32)>) -> Sample {
    let (w, h) = (sample.width(), sample.height());
    let mut rgb = RgbImage::from_pixel(w, h, Rgb(BACKGROUND_RGB));
    let mut corr = RgbImage::new(w, h);
    let mut init = RgbImage::new(w, h);
    let mut mask = Mask::new(w, h);
    let mut depth = vec![f32::INFINITY; (w * h) as usize];
    let mut instances = vec![0u8; (w * h) as usize];
    let mut first_target = std::collections::HashMap::new();
    for y in 0..h {
        for x in 0..w {
            let Some((sx, sy)) = source(x, y) else { continue };
            let (i, si) = ((y * w + x) as usize, (sy * w + sx) as usize);
            rgb.put_pixel(x, y, *sample.rgb.get_pixel(sx, sy));
            corr.put_pixel(x, y, *sample.corr.get_pixel(sx, sy));
            init.put_pixel(x, y, *sample.init.get_pixel(sx, sy));
            mask.set(x, y, sample.mask.get(sx, sy));
            depth[i] = sample.depth[si];
            instances[i] = sample.instances[si];
            first_target.entry((sx, sy)).or_insert((x, y));
        }
    }
    let annotations = sample
        .annotations
        .iter()
        .filter_map(|a| {
            first_target.get(&(a.x, a.y)).map(|&(x, y)| Annotation { x, y, vertex: a.vertex })
        })
        .collect();
    Sample {
        rgb,
        mask,
        corr,
        init,
        depth,
        instances,
        annotations,
        meta: sample.meta.clone(),
    }
}

/// Depth-ordered composite. Person `i` gets instance id `i + 1`; the
/// nearest covering person owns each pixel, earlier people win ties.
pub fn composite(people: &[Sample]) -> Sample {
    let first = &people[0];
    let (w, h) = (first.width(), first.height());
    let mut out = Sample {
        rgb: first.rgb.clone(),
        mask: Mask::new(w, h),
        corr: RgbImage::new(w, h),
        init: RgbImage::new(w, h),
        depth: vec![f32::INFINITY; (w * h) as usize],
        instances: vec![0; (w * h) as usize],
        annotations: Vec::new(),
        meta: super::SampleMeta {
            pose: None,
            instance_count: people.len() as u32,
            ..first.meta.clone()
        },
    };
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let mut owner: Option<usize> = None;
            for (k, p) in people.iter().enumerate() {
                if p.mask.get(x, y) && owner.map_or(true, |o| p.depth[i] < people[o].depth[i]) {
                    owner = Some(k);
                }
            }
            if let Some(k) = owner {
                let p = &people[k];
                out.mask.set(x, y, true);
                out.rgb.put_pixel(x, y, *p.rgb.get_pixel(x, y));
                out.corr.put_pixel(x, y, *p.corr.get_pixel(x, y));
                out.init.put_pixel(x, y, *p.init.get_pixel(x, y));
                out.depth[i] = p.depth[i];
                out.instances[i] = k as u8 + 1;
            }
        }
    }
    for (k, p) in people.iter().enumerate() {
        out.annotations.extend(
            p.annotations
                .iter()
                .filter(|a| out.instances[(a.y * w + a.x) as usize] == k as u8 + 1),
        );
    }
    out.annotations.sort();
    debug_assert!(out.corr.pixels().zip(out.mask.as_slice()).all(|(c, &m)| m || c.0 == BACKGROUND));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SampleMeta;

    fn blob(cx: f64, cy: f64, r: f64, depth: f32, tag: u8) -> Sample {
        let n = 24u32;
        let mask = Mask::from_fn(n, n, |x, y| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r);
        let corr = RgbImage::from_fn(n, n, |x, y| {
            if mask.get(x, y) {
                Rgb([tag, x as u8 + 1, y as u8 + 1])
            } else {
                Rgb(BACKGROUND)
            }
        });
        let depth = (0..n * n)
            .map(|i| if mask.get(i % n, i / n) { depth + (i % n) as f32 * 0.01 } else { f32::INFINITY })
            .collect();
        let instances = mask.as_slice().iter().map(|&m| m as u8).collect();
        let annotations = mask
            .pixels()
            .step_by(7)
            .map(|(x, y)| Annotation { x, y, vertex: (x + y) as usize })
            .collect();
        Sample {
            rgb: corr.clone(),
            init: corr.clone(),
            corr,
            mask,
            depth,
            instances,
            annotations,
            meta: SampleMeta {
                sequence: 0,
                frame: 0,
                pose: None,
                instance_count: 1,
            },
        }
    }

    #[test]
    fn identity_is_unchanged() {
        let s = blob(12.0, 12.0, 6.0, 1.0, 10);
        assert_eq!(augment(&s, &[], Recipe::Identity, 0).unwrap(), s);
    }

    #[test]
    fn rotation_commutes_with_mask_extraction() {
        let s = blob(10.0, 13.0, 6.0, 1.0, 10);
        let r = augment(&s, &[], Recipe::Rotate(27.0), 0).unwrap();
        let alone = remap(&s, |x, y| {
            let (sn, cs) = 27f64.to_radians().sin_cos();
            let (dx, dy) = (x as f64 + 0.5 - 12.0, y as f64 + 0.5 - 12.0);
            pixel_of(cs * dx - sn * dy + 12.0, sn * dx + cs * dy + 12.0, 24.0, 24.0)
        });
        assert_eq!(r.mask, alone.mask);
        assert_eq!(Mask::from_corr(&r.corr), r.mask);
        for a in &r.annotations {
            assert!(r.mask.get(a.x, a.y));
        }
    }

    #[test]
    fn hue_shift_leaves_labels() {
        let s = blob(12.0, 12.0, 6.0, 1.0, 200);
        let r = augment(&s, &[], Recipe::HueShift(90), 0).unwrap();
        assert_eq!(r.corr, s.corr);
        assert_eq!(r.init, s.init);
        assert_ne!(r.rgb, s.rgb);
    }

    #[test]
    fn composite_follows_depth() {
        let a = blob(9.0, 12.0, 6.0, 2.0, 50);
        let b = blob(14.0, 12.0, 6.0, 1.0, 150);
        let out = composite(&[a.clone(), b.clone()]);
        assert_eq!(out.mask, a.mask.union(&b.mask));
        for y in 0..24 {
            for x in 0..24 {
                let i = (y * 24 + x) as usize;
                let expect = match (a.mask.get(x, y), b.mask.get(x, y)) {
                    (false, false) => 0,
                    (true, false) => 1,
                    (false, true) => 2,
                    (true, true) => {
                        if b.depth[i] < a.depth[i] {
                            2
                        } else {
                            1
                        }
                    }
                };
                assert_eq!(out.instances[i], expect);
            }
        }
    }

    #[test]
    fn upper_crop_keeps_foreground() {
        let s = blob(12.0, 12.0, 8.0, 1.0, 10);
        let r = augment(&s, &[], Recipe::UpperCrop, 4).unwrap();
        assert!(!r.mask.is_empty());
        assert!(augment(&blob(-50.0, -50.0, 1.0, 1.0, 1), &[], Recipe::UpperCrop, 0).is_err());
    }

    #[test]
    fn multi_person_needs_companions() {
        let s = blob(12.0, 12.0, 5.0, 1.0, 10);
        assert!(augment(&s, &[], Recipe::MultiPerson(2), 0).is_err());
        let out = augment(&s, &[blob(8.0, 8.0, 5.0, 0.5, 90)], Recipe::MultiPerson(2), 1).unwrap();
        assert_eq!(out.meta.instance_count, 2);
    }
}
