//! Pseudo ground truth from sparse annotations and a coarse initialization.

use image::{Rgb, RgbImage};

use super::Annotation;
use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::mesh::coloring::{Rgb as Color, VertexColoring, BACKGROUND};

/// Grid of optional source colors with an exact Euclidean nearest query.
struct Sources {
    width: i64,
    height: i64,
    color: Vec<Option<Color>>,
    any: bool,
}

impl Sources {
    fn new(width: u32, height: u32) -> Self {
        Self {
            width: width as i64,
            height: height as i64,
            color: vec![None; (width * height) as usize],
            any: false,
        }
    }

    fn set(&mut self, x: u32, y: u32, c: Color) {
        self.color[(y as i64 * self.width + x as i64) as usize] = Some(c);
        self.any = true;
    }

    fn get(&self, x: i64, y: i64) -> Option<Color> {
        if x < 0 || y < 0 || x >= self.width || y >= self.height {
            return None;
        }
        self.color[(y * self.width + x) as usize]
    }

    /// Nearest source to `(x, y)`: `(squared distance, color)`, ties to the
    /// lexicographically smaller `(x, y)`.
    fn nearest(&self, x: u32, y: u32) -> Option<(i64, Color)> {
        if !self.any {
            return None;
        }
        let (x, y) = (x as i64, y as i64);
        let mut best: Option<(i64, (i64, i64), Color)> = None;
        let max_r = self.width.max(self.height);
        for r in 0..=max_r {
            // Square ring at Chebyshev radius r.
            for dy in -r..=r {
                let step = if dy.abs() == r { 1 } else { 2 * r.max(1) };
                let mut dx = -r;
                while dx <= r {
                    if let Some(c) = self.get(x + dx, y + dy) {
                        let d = dx * dx + dy * dy;
                        let key = (x + dx, y + dy);
                        if best.map_or(true, |(bd, bk, _)| (d, key) < (bd, bk)) {
                            best = Some((d, key, c));
                        }
                    }
                    dx += step;
                }
            }
            // Anything on ring r+1 is at least r+1 away.
            if let Some((d, _, _)) = best {
                if d < (r + 1) * (r + 1) {
                    break;
                }
            }
        }
        best.map(|(d, _, c)| (d, c))
    }
}

/// Extends sparse annotations and the coarse init over the whole mask.
///
/// Annotated pixels take their vertex color. Init-covered pixels keep the
/// init unless an annotation lies strictly closer than `trust_radius`
/// pixels, in which case the nearest annotation wins. Every other mask
/// pixel copies the nearest source pixel (annotated or init-covered).
pub fn densify_sparse_annotations(
    annotations: &[Annotation],
    init: &RgbImage,
    mask: &Mask,
    coloring: &VertexColoring,
    trust_radius: f64,
) -> Result<RgbImage> {
    if mask.is_empty() {
        return Err(Error::EmptyMask("densification mask"));
    }
    let (w, h) = mask.dims();
    let mut annotated = Sources::new(w, h);
    for a in annotations {
        if a.x >= w || a.y >= h || !mask.get(a.x, a.y) {
            return Err(Error::Dataset(format!("annotation at ({}, {}) lies outside the mask", a.x, a.y)));
        }
        annotated.set(a.x, a.y, coloring.vertex_to_color(a.vertex)?);
    }
    let trust2 = trust_radius * trust_radius;
    let mut sources = Sources::new(w, h);
    let mut out = RgbImage::from_pixel(w, h, Rgb(BACKGROUND));
    for (x, y) in mask.pixels() {
        let own = annotated.get(x as i64, y as i64);
        let init_c = init.get_pixel(x, y).0;
        let c = match own {
            Some(c) => Some(c),
            None if init_c != BACKGROUND => Some(match annotated.nearest(x, y) {
                Some((d2, c)) if (d2 as f64) < trust2 => c,
                _ => init_c,
            }),
            None => None,
        };
        if let Some(c) = c {
            sources.set(x, y, c);
            out.put_pixel(x, y, Rgb(c));
        }
    }
    if !sources.any {
        return Ok(out);
    }
    for (x, y) in mask.pixels() {
        if out.get_pixel(x, y).0 == BACKGROUND {
            let (_, c) = sources.nearest(x, y).expect("sources are nonempty");
            out.put_pixel(x, y, Rgb(c));
        }
    }
    Ok(out)
}
