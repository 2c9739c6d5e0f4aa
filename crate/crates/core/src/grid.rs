//! Binary masks and small raster helpers shared by data generation,
//! losses and metrics.

use image::{GrayImage, Luma, RgbImage};

use crate::error::{Error, Result};
use crate::mesh::coloring::{Rgb, BACKGROUND};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; (width * height) as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.set(x, y, f(x, y));
            }
        }
        m
    }

    pub fn from_vec(width: u32, height: u32, data: Vec<bool>) -> Result<Self> {
        if data.len() != (width * height) as usize {
            return Err(Error::Shape(format!(
                "{} mask values for a {width}x{height} grid",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Nonzero pixels of a correspondence image.
    pub fn from_corr(img: &RgbImage) -> Self {
        Self::from_fn(img.width(), img.height(), |x, y| img.get_pixel(x, y).0 != BACKGROUND)
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        Self::from_fn(img.width(), img.height(), |x, y| img.get_pixel(x, y).0[0] >= 128)
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize]
    }

    /// Out-of-bounds coordinates read as background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64 && self.get(x as u32, y as u32)
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.data[(y * self.width + x) as usize] = v;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Foreground pixels in raster order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }

    pub fn union(&self, other: &Mask) -> Mask {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect();
        Mask { data, ..*self }
    }

    pub fn intersection(&self, other: &Mask) -> Mask {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect();
        Mask { data, ..*self }
    }

    /// Erosion by a `(2r+1)^2` square; pixels beyond the border count as
    /// background.
    pub fn erode(&self, r: u32) -> Mask {
        if r == 0 {
            return self.clone();
        }
        // Separable: horizontal then vertical run checks.
        let (w, h) = (self.width as i64, self.height as i64);
        let r = r as i64;
        let mut horiz = Mask::new(self.width, self.height);
        for y in 0..h {
            for x in 0..w {
                let ok = (x - r..=x + r).all(|xx| self.get_signed(xx, y));
                horiz.set(x as u32, y as u32, ok);
            }
        }
        let mut out = Mask::new(self.width, self.height);
        for y in 0..h {
            for x in 0..w {
                let ok = (y - r..=y + r).all(|yy| horiz.get_signed(x, yy));
                out.set(x as u32, y as u32, ok);
            }
        }
        out
    }

    /// Dilation by a `(2r+1)^2` square.
    pub fn dilate(&self, r: u32) -> Mask {
        let (w, h) = (self.width as i64, self.height as i64);
        let r = r as i64;
        Mask::from_fn(self.width, self.height, |x, y| {
            let (x, y) = (x as i64, y as i64);
            (y - r..=y + r).any(|yy| (x - r..=x + r).any(|xx| xx >= 0 && yy >= 0 && xx < w && yy < h && self.get(xx as u32, yy as u32)))
        })
    }

    /// Bounding box `(x0, y0, x1, y1)` inclusive, `None` when empty.
    pub fn bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let mut it = self.pixels();
        let (x, y) = it.next()?;
        let init = (x, y, x, y);
        Some(it.fold(init, |(x0, y0, x1, y1), (x, y)| {
            (x0.min(x), y0.min(y), x1.max(x), y1.max(y))
        }))
    }
}

/// Zeroes every pixel of `img` outside `mask`.
pub fn apply_mask(img: &RgbImage, mask: &Mask) -> RgbImage {
    RgbImage::from_fn(img.width(), img.height(), |x, y| {
        if mask.get(x, y) {
            *img.get_pixel(x, y)
        } else {
            image::Rgb(BACKGROUND)
        }
    })
}

#[inline]
pub fn rgb_at(img: &RgbImage, x: u32, y: u32) -> Rgb {
    img.get_pixel(x, y).0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(size: u32, radius: f64) -> Mask {
        let c = (size as f64 - 1.0) / 2.0;
        Mask::from_fn(size, size, |x, y| {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            dx * dx + dy * dy <= radius * radius
        })
    }

    #[test]
    fn erosion_matches_window_definition() {
        let m = disk(16, 6.5);
        for r in 0..4 {
            let e = m.erode(r);
            for y in 0..16i64 {
                for x in 0..16i64 {
                    let r = r as i64;
                    let expect = (y - r..=y + r).all(|yy| (x - r..=x + r).all(|xx| m.get_signed(xx, yy)));
                    assert_eq!(e.get(x as u32, y as u32), expect);
                }
            }
        }
    }

    #[test]
    fn dilate_then_contains() {
        let m = disk(16, 3.0);
        let d = m.dilate(1);
        assert!(m.pixels().all(|(x, y)| d.get(x, y)));
        assert!(d.count() > m.count());
    }

    #[test]
    fn bbox_of_empty_is_none() {
        assert!(Mask::new(4, 4).bbox().is_none());
    }
}
