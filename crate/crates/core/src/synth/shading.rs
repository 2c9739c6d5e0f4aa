//! Flat procedural appearance: seeded per-part albedo, stripes that move
//! with the body, Lambertian shading under one fixed light.

use image::{Rgb, RgbImage};
use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::raster::Raster;
use crate::mesh::{BodyPart, TemplateMesh};

pub const BACKGROUND_RGB: [u8; 3] = [32, 32, 32];
const AMBIENT: f64 = 0.35;
const PARTS: [BodyPart; 9] = [
    BodyPart::Head,
    BodyPart::Torso,
    BodyPart::UpperArm,
    BodyPart::Forearm,
    BodyPart::Hand,
    BodyPart::Thigh,
    BodyPart::Shin,
    BodyPart::Foot,
    BodyPart::Other,
];

#[derive(Debug, Clone)]
pub struct Appearance {
    albedo: [[f64; 3]; 9],
    stripe_freq: f64,
    stripe_depth: f64,
}

impl Appearance {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut albedo = [[0.0; 3]; 9];
        for a in &mut albedo {
            for c in a.iter_mut() {
                *c = rng.random_range(0.25..0.95);
            }
        }
        Self {
            albedo,
            stripe_freq: rng.random_range(6.0..18.0),
            stripe_depth: rng.random_range(0.1..0.35),
        }
    }

    fn color(&self, part: BodyPart, canonical: &Point3<f64>) -> [f64; 3] {
        let i = PARTS.iter().position(|&p| p == part).unwrap_or(8);
        let s = 1.0 - self.stripe_depth * (0.5 + 0.5 * (self.stripe_freq * canonical.y * std::f64::consts::TAU).sin());
        self.albedo[i].map(|c| c * s)
    }
}

fn light_dir() -> Vector3<f64> {
    Vector3::new(0.4, 0.8, 0.45).normalize()
}

/// Shades the pixels a [`Raster`] covers. `posed` are the articulated
/// positions of `mesh` the raster was produced from.
pub fn render_rgb(mesh: &TemplateMesh, posed: &[Point3<f64>], raster: &Raster, seed: u64) -> RgbImage {
    let look = Appearance::from_seed(seed);
    let light = light_dir();
    let canonical = mesh.vertices();
    let parts = mesh.parts();
    RgbImage::from_fn(raster.width, raster.height, |x, y| {
        let i = (y * raster.width + x) as usize;
        let (Some(f), Some(v)) = (raster.face[i], raster.vertex[i]) else {
            return Rgb(BACKGROUND_RGB);
        };
        let [a, b, c] = mesh.faces()[f as usize].map(|k| posed[k]);
        let n = (b - a).cross(&(c - a));
        let lambert = n.try_normalize(1e-15).map_or(0.0, |n| n.dot(&light).abs());
        let shade = AMBIENT + (1.0 - AMBIENT) * lambert;
        let v = v as usize;
        let albedo = look.color(parts[v], &canonical[v]);
        Rgb(albedo.map(|c| (255.0 * c * shade).round().clamp(0.0, 255.0) as u8))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::pose::{articulate, Camera, PoseParams};
    use crate::synth::raster::rasterize_ids;

    fn setup() -> (TemplateMesh, Vec<Point3<f64>>, Raster) {
        let mesh = TemplateMesh::humanoid();
        let cam = Camera {
            position: [0.0, 0.9, 3.0],
            look_at: [0.0, 0.9, 0.0],
            vfov_deg: 40.0,
            width: 48,
            height: 48,
        };
        let pose = PoseParams::rest(mesh.bones().len(), cam.clone());
        let posed = articulate(&mesh, &pose).unwrap();
        let r = rasterize_ids(&posed, mesh.faces(), &cam).unwrap();
        (mesh, posed, r)
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let (mesh, posed, r) = setup();
        let a = render_rgb(&mesh, &posed, &r, 1);
        assert_eq!(a, render_rgb(&mesh, &posed, &r, 1));
        let b = render_rgb(&mesh, &posed, &r, 2);
        let m = r.mask();
        assert!(m.pixels().any(|(x, y)| a.get_pixel(x, y) != b.get_pixel(x, y)));
        for (x, y, p) in a.enumerate_pixels() {
            if !m.get(x, y) {
                assert_eq!(p.0, BACKGROUND_RGB);
            }
        }
    }
}
