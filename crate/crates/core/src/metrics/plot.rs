//! Minimal PNG line charts for metric curves: axes, horizontal grid lines
//! every 25 %, one polyline with square markers. No text rendering.

use std::path::Path;

use image::{Rgb, RgbImage};

use super::MetricReport;
use crate::error::{Error, Result};

const WIDTH: u32 = 480;
const HEIGHT: u32 = 320;
const MARGIN: i64 = 32;
const BG: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GRID: Rgb<u8> = Rgb([220, 220, 220]);
const LINE: Rgb<u8> = Rgb([31, 119, 180]);

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let (sx, sy) = ((x1 - x0).signum(), (y1 - y0).signum());
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, c);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Chart of `(x, percentage)` points with y fixed to `[0, 100]` and x
/// spanning the data range.
pub fn line_chart(points: &[(f64, f64)]) -> Result<RgbImage> {
    if points.is_empty() || points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::Config("line chart needs finite points".into()));
    }
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, BG);
    let (w, h) = (WIDTH as i64, HEIGHT as i64);
    let (left, right, top, bottom) = (MARGIN, w - MARGIN / 2, MARGIN / 2, h - MARGIN);
    for q in 0..=4 {
        let y = bottom - (bottom - top) * q / 4;
        line(&mut img, (left, y), (right, y), GRID);
    }
    line(&mut img, (left, bottom), (right, bottom), AXIS);
    line(&mut img, (left, bottom), (left, top), AXIS);
    let xmin = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let xmax = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let span = if xmax > xmin { xmax - xmin } else { 1.0 };
    let to_px = |(x, y): (f64, f64)| {
        let px = left + ((x - xmin) / span * (right - left) as f64).round() as i64;
        let py = bottom - (y.clamp(0.0, 100.0) / 100.0 * (bottom - top) as f64).round() as i64;
        (px, py)
    };
    let pix: Vec<(i64, i64)> = points.iter().map(|&p| to_px(p)).collect();
    for pair in pix.windows(2) {
        line(&mut img, pair[0], pair[1], LINE);
    }
    for &(x, y) in &pix {
        line(&mut img, (x, bottom), (x, bottom + 4), AXIS);
        for dy in -2..=2 {
            for dx in -2..=2 {
                put(&mut img, x + dx, y + dy, LINE);
            }
        }
    }
    Ok(img)
}

/// Writes `accuracy_vs_window.png` and, when present,
/// `consistency_vs_interval.png` into `dir`.
pub fn save_report_plots(report: &MetricReport, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let acc: Vec<(f64, f64)> = report.pixel_accuracy.iter().map(|(&w, &p)| (w as f64, p)).collect();
    if !acc.is_empty() {
        let path = dir.join("accuracy_vs_window.png");
        line_chart(&acc)?.save(&path)?;
        written.push(path);
    }
    let tc: Vec<(f64, f64)> = report.temporal.iter().map(|(&k, &p)| (k as f64, p)).collect();
    if !tc.is_empty() {
        let path = dir.join("consistency_vs_interval.png");
        line_chart(&tc)?.save(&path)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_marks_points() {
        let img = line_chart(&[(0.0, 0.0), (10.0, 100.0)]).unwrap();
        assert_eq!(img.dimensions(), (WIDTH, HEIGHT));
        let (l, b) = (MARGIN as u32, HEIGHT - MARGIN as u32);
        assert_eq!(*img.get_pixel(l, b), LINE);
        assert_eq!(*img.get_pixel(WIDTH - MARGIN as u32 / 2, MARGIN as u32 / 2), LINE);
        assert!(line_chart(&[]).is_err());
        assert!(line_chart(&[(0.0, f64::NAN)]).is_err());
    }
}
