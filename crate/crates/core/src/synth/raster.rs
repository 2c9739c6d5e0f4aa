//! Depth-buffered triangle rasterization with perspective-correct
//! barycentrics. Each covered pixel records the front triangle and that
//! triangle's barycentrically dominant vertex.

use image::RgbImage;
use nalgebra::Point3;

use super::pose::Camera;
use crate::error::Result;
use crate::grid::Mask;
use crate::mesh::coloring::{VertexColoring, BACKGROUND};

/// Triangles with a vertex closer than this to the eye plane are dropped.
pub const NEAR_PLANE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    /// Dominant vertex of the front triangle per pixel.
    pub vertex: Vec<Option<u32>>,
    pub face: Vec<Option<u32>>,
    /// View-space depth, `f32::INFINITY` where uncovered.
    pub depth: Vec<f32>,
}

impl Raster {
    pub fn mask(&self) -> Mask {
        let data = self.vertex.iter().map(Option::is_some).collect();
        Mask::from_vec(self.width, self.height, data).expect("raster dims are consistent")
    }

    /// Correspondence image: each covered pixel takes its vertex's color.
    pub fn correspondence(&self, coloring: &VertexColoring) -> RgbImage {
        RgbImage::from_fn(self.width, self.height, |x, y| {
            let i = (y * self.width + x) as usize;
            image::Rgb(match self.vertex[i] {
                Some(v) => coloring.colors()[v as usize],
                None => BACKGROUND,
            })
        })
    }

    pub fn vertex_at(&self, x: u32, y: u32) -> Option<u32> {
        self.vertex[(y * self.width + x) as usize]
    }
}

/// Output bundle of [`rasterize`].
#[derive(Debug, Clone)]
pub struct Rasterized {
    pub corr: RgbImage,
    pub mask: Mask,
    pub depth: Vec<f32>,
    pub raster: Raster,
}

#[inline]
fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Screen-space coverage test of one triangle at one pixel center.
///
/// Returns perspective-correct barycentrics and depth when the center lies
/// inside or on the boundary of the projected triangle.
#[inline]
pub fn cover(screen: &[(f64, f64, f64); 3], px: f64, py: f64) -> Option<([f64; 3], f64)> {
    let [(x0, y0, z0), (x1, y1, z1), (x2, y2, z2)] = *screen;
    let area = edge(x0, y0, x1, y1, x2, y2);
    if area == 0.0 || !area.is_finite() {
        return None;
    }
    let mut w = [
        edge(x1, y1, x2, y2, px, py),
        edge(x2, y2, x0, y0, px, py),
        edge(x0, y0, x1, y1, px, py),
    ];
    if area < 0.0 {
        w = w.map(|v| -v);
    }
    if w.iter().any(|&v| v < 0.0) {
        return None;
    }
    let a = area.abs();
    let b = [w[0] / a, w[1] / a, w[2] / a];
    let inv = [b[0] / z0, b[1] / z1, b[2] / z2];
    let s = inv[0] + inv[1] + inv[2];
    Some(([inv[0] / s, inv[1] / s, inv[2] / s], 1.0 / s))
}

/// Index (0..3) of the largest barycentric weight, first on ties.
#[inline]
pub fn dominant(b: &[f64; 3]) -> usize {
    let mut best = 0;
    for k in 1..3 {
        if b[k] > b[best] {
            best = k;
        }
    }
    best
}

/// Projects every vertex: `(x, y, view depth)`.
pub fn project_all(positions: &[Point3<f64>], camera: &Camera) -> Result<Vec<(f64, f64, f64)>> {
    let frame = camera.frame()?;
    Ok(positions.iter().map(|p| frame.project(p)).collect())
}

/// Rasterizes triangles into vertex/face/depth buffers. Nearer fragments win;
/// on equal depth the earlier face is kept.
pub fn rasterize_ids(positions: &[Point3<f64>], faces: &[[usize; 3]], camera: &Camera) -> Result<Raster> {
    let projected = project_all(positions, camera)?;
    let (w, h) = (camera.width, camera.height);
    let n = (w * h) as usize;
    let mut raster = Raster {
        width: w,
        height: h,
        vertex: vec![None; n],
        face: vec![None; n],
        depth: vec![f32::INFINITY; n],
    };
    let mut zbuf = vec![f64::INFINITY; n];
    for (fi, f) in faces.iter().enumerate() {
        let screen = f.map(|i| projected[i]);
        if screen.iter().any(|s| s.2 <= NEAR_PLANE) {
            continue;
        }
        let xmin = screen.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        let xmax = screen.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        let ymin = screen.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        let ymax = screen.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        // Pixel centers at +0.5.
        let x0 = (xmin - 0.5).ceil().max(0.0) as i64;
        let x1 = ((xmax - 0.5).floor() as i64).min(w as i64 - 1);
        let y0 = (ymin - 0.5).ceil().max(0.0) as i64;
        let y1 = ((ymax - 0.5).floor() as i64).min(h as i64 - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let Some((b, z)) = cover(&screen, x as f64 + 0.5, y as f64 + 0.5) else {
                    continue;
                };
                let i = (y as u32 * w + x as u32) as usize;
                if z < zbuf[i] {
                    zbuf[i] = z;
                    raster.depth[i] = z as f32;
                    raster.face[i] = Some(fi as u32);
                    raster.vertex[i] = Some(f[dominant(&b)] as u32);
                }
            }
        }
    }
    Ok(raster)
}

/// Renders the correspondence image, foreground mask and depth of a posed
/// mesh. Colors are flat per pixel (nearest vertex), never interpolated,
/// so every foreground pixel decodes to exactly one vertex.
pub fn rasterize(
    positions: &[Point3<f64>],
    faces: &[[usize; 3]],
    coloring: &VertexColoring,
    camera: &Camera,
) -> Result<Rasterized> {
    let raster = rasterize_ids(positions, faces, camera)?;
    Ok(Rasterized {
        corr: raster.correspondence(coloring),
        mask: raster.mask(),
        depth: raster.depth.clone(),
        raster,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn camera(size: u32) -> Camera {
        Camera {
            position: [0.0, 0.0, 5.0],
            look_at: [0.0, 0.0, 0.0],
            vfov_deg: 45.0,
            width: size,
            height: size,
        }
    }

    #[test]
    fn behind_camera_is_empty() {
        let pts = vec![
            Point3::new(-1.0, -1.0, 8.0),
            Point3::new(1.0, -1.0, 8.0),
            Point3::new(0.0, 1.0, 8.0),
        ];
        let col = VertexColoring::from_colors(vec![[1, 2, 3], [4, 5, 6], [7, 8, 9]]);
        let r = rasterize(&pts, &[[0, 1, 2]], &col, &camera(32)).unwrap();
        assert!(r.mask.is_empty());
        assert!(r.corr.pixels().all(|p| p.0 == BACKGROUND));
    }

    #[test]
    fn flat_colored_triangle_covers_center() {
        let pts = vec![
            Point3::new(-1.0, -1.0, 0.0),
            Point3::new(1.0, -1.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        // All three vertices share one color, so the dominant choice is moot.
        let raster = rasterize_ids(&pts, &[[0, 1, 2]], &camera(32)).unwrap();
        let v = raster.vertex_at(16, 16).expect("center covered");
        let c = [90, 40, 200];
        let colors = [c, c, c];
        assert_eq!(colors[v as usize], c);
        assert!(raster.mask().get(16, 16));
    }

    /// Pixel-major reference: for every pixel scan all faces with an
    /// independent point-in-triangle test and keep the nearest.
    fn brute_force(pts: &[Point3<f64>], faces: &[[usize; 3]], cam: &Camera) -> Vec<Option<(u32, f64)>> {
        let frame = cam.frame().unwrap();
        let proj: Vec<_> = pts.iter().map(|p| frame.project(p)).collect();
        let mut out = Vec::new();
        for y in 0..cam.height {
            for x in 0..cam.width {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let mut best: Option<(u32, f64)> = None;
                for (fi, f) in faces.iter().enumerate() {
                    let [a, b, c] = f.map(|i| proj[i]);
                    if a.2 <= NEAR_PLANE || b.2 <= NEAR_PLANE || c.2 <= NEAR_PLANE {
                        continue;
                    }
                    // Solve p = a + s (b - a) + t (c - a).
                    let det = (b.0 - a.0) * (c.1 - a.1) - (c.0 - a.0) * (b.1 - a.1);
                    if det == 0.0 {
                        continue;
                    }
                    let s = ((px - a.0) * (c.1 - a.1) - (c.0 - a.0) * (py - a.1)) / det;
                    let t = ((b.0 - a.0) * (py - a.1) - (px - a.0) * (b.1 - a.1)) / det;
                    let eps = 1e-12;
                    if s < -eps || t < -eps || s + t > 1.0 + eps {
                        continue;
                    }
                    let l = [1.0 - s - t, s, t];
                    let z = 1.0 / (l[0] / a.2 + l[1] / b.2 + l[2] / c.2);
                    if best.map_or(true, |(_, bz)| z < bz) {
                        best = Some((fi as u32, z));
                    }
                }
                out.push(best);
            }
        }
        out
    }

    #[test]
    fn overlapping_triangles_match_brute_force() {
        let pts = vec![
            Point3::new(-1.5, -1.2, 0.3),
            Point3::new(1.4, -1.0, -0.2),
            Point3::new(0.1, 1.6, 0.0),
            Point3::new(-1.0, 1.1, 0.6),
            Point3::new(1.2, 0.9, -0.5),
            Point3::new(0.2, -1.7, 0.4),
        ];
        let faces = vec![[0, 1, 2], [3, 5, 4]];
        let cam = camera(32);
        let r = rasterize_ids(&pts, &faces, &cam).unwrap();
        let oracle = brute_force(&pts, &faces, &cam);
        let mut contested = 0;
        for (i, o) in oracle.iter().enumerate() {
            assert_eq!(r.face[i], o.map(|(f, _)| f), "pixel {i}");
            if let Some((_, z)) = o {
                assert!((r.depth[i] as f64 - z).abs() < 1e-5);
            }
        }
        // Both faces must genuinely compete somewhere.
        for y in 0..32 {
            for x in 0..32 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let frame = cam.frame().unwrap();
                let proj: Vec<_> = pts.iter().map(|p| frame.project(p)).collect();
                let both = faces
                    .iter()
                    .all(|f| cover(&f.map(|i| proj[i]), px, py).is_some());
                contested += both as usize;
            }
        }
        assert!(contested > 20);
        let fronts: std::collections::HashSet<_> = r.face.iter().flatten().collect();
        assert_eq!(fronts.len(), 2);
    }

    #[test]
    fn dominant_vertex_near_corner() {
        let pts = vec![
            Point3::new(-2.0, -2.0, 0.0),
            Point3::new(2.0, -2.0, 0.0),
            Point3::new(0.0, 2.0, 0.0),
        ];
        let r = rasterize_ids(&pts, &[[0, 1, 2]], &camera(64)).unwrap();
        let frame = camera(64).frame().unwrap();
        let (x, y, _) = frame.project(&Point3::new(1.7, -1.8, 0.0));
        assert_eq!(r.vertex_at(x as u32, y as u32), Some(1));
    }
}
