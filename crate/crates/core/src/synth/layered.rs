//! Body plus two garment shells rendered as separate correspondence layers.

use image::{Rgb, RgbImage};
use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::pose::{articulate, PoseParams};
use super::raster::{rasterize_ids, Raster};
use super::shading::render_rgb;
use super::{Sample, SampleMeta};
use crate::error::Result;
use crate::grid::Mask;
use crate::mesh::coloring::{build_coloring, BACKGROUND};
use crate::mesh::{BodyPart, TemplateMesh, VertexColoring};

/// Height splitting upper from lower garment on the torso, canonical units.
const WAIST: f64 = 1.0;

/// Shell offsets along the posed vertex normals, mesh units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarmentOffsets {
    pub upper: f64,
    pub lower: f64,
}

impl Default for GarmentOffsets {
    fn default() -> Self {
        Self {
            upper: 0.03,
            lower: 0.025,
        }
    }
}

pub const LAYER_BODY: u8 = 1;
pub const LAYER_UPPER: u8 = 2;
pub const LAYER_LOWER: u8 = 3;

/// A garment shell: a template subset with its own color code.
#[derive(Debug, Clone)]
pub struct Shell {
    pub mesh: TemplateMesh,
    /// Index of each shell vertex in the body template.
    pub source: Vec<usize>,
    pub coloring: VertexColoring,
}

impl Shell {
    fn new(body: &TemplateMesh, keep: impl Fn(usize) -> bool) -> Result<Self> {
        let (mesh, source) = body.submesh(keep)?;
        let coloring = build_coloring(&mesh)?;
        Ok(Self { mesh, source, coloring })
    }

    /// Shirt: torso above the waist and upper arms.
    pub fn upper(body: &TemplateMesh) -> Result<Self> {
        let (parts, v) = (body.parts(), body.vertices());
        Self::new(body, |i| {
            parts[i] == BodyPart::UpperArm || (parts[i] == BodyPart::Torso && v[i].y >= WAIST)
        })
    }

    /// Trousers: torso below the waist, thighs and shins.
    pub fn lower(body: &TemplateMesh) -> Result<Self> {
        let (parts, v) = (body.parts(), body.vertices());
        Self::new(body, |i| {
            matches!(parts[i], BodyPart::Thigh | BodyPart::Shin) || (parts[i] == BodyPart::Torso && v[i].y < WAIST)
        })
    }

    fn posed(&self, body_posed: &[Point3<f64>], normals: &[nalgebra::Vector3<f64>], offset: f64) -> Vec<Point3<f64>> {
        self.source.iter().map(|&s| body_posed[s] + normals[s] * offset).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LayeredSample {
    /// Composite view: `mask` is the union of all layers, `corr` the
    /// unoccluded body.
    pub sample: Sample,
    /// Body, upper garment and lower garment correspondences, each zero
    /// outside its segmentation region and in its own color code.
    pub layers: [RgbImage; 3],
    /// Per pixel: 0 background, then [`LAYER_BODY`], [`LAYER_UPPER`],
    /// [`LAYER_LOWER`] for the front-most surface.
    pub segmentation: Vec<u8>,
}

/// Renders the posed body and its two garment shells. Depth decides the
/// visible layer; on exact ties the body wins, then the upper garment.
pub fn make_layered(
    body: &TemplateMesh,
    body_coloring: &VertexColoring,
    shells: &[Shell; 2],
    offsets: GarmentOffsets,
    pose: &PoseParams,
    appearance: u64,
) -> Result<LayeredSample> {
    let posed = articulate(body, pose)?;
    let normals = body.with_vertices(posed.clone())?.vertex_normals();
    let upper = shells[0].posed(&posed, &normals, offsets.upper);
    let lower = shells[1].posed(&posed, &normals, offsets.lower);
    let rasters: [Raster; 3] = [
        rasterize_ids(&posed, body.faces(), &pose.camera)?,
        rasterize_ids(&upper, shells[0].mesh.faces(), &pose.camera)?,
        rasterize_ids(&lower, shells[1].mesh.faces(), &pose.camera)?,
    ];
    let colorings = [body_coloring, &shells[0].coloring, &shells[1].coloring];
    let (w, h) = (pose.camera.width, pose.camera.height);
    let n = (w * h) as usize;
    let mut segmentation = vec![0u8; n];
    let mut depth = vec![f32::INFINITY; n];
    for i in 0..n {
        for (k, r) in rasters.iter().enumerate() {
            if r.vertex[i].is_some() && r.depth[i] < depth[i] {
                depth[i] = r.depth[i];
                segmentation[i] = k as u8 + 1;
            }
        }
    }
    let layers: [RgbImage; 3] = std::array::from_fn(|k| {
        RgbImage::from_fn(w, h, |x, y| {
            let i = (y * w + x) as usize;
            match rasters[k].vertex[i] {
                Some(v) if segmentation[i] == k as u8 + 1 => Rgb(colorings[k].colors()[v as usize]),
                _ => Rgb(BACKGROUND),
            }
        })
    });
    let mask = Mask::from_vec(w, h, segmentation.iter().map(|&s| s != 0).collect())?;
    // Garments get the shading of the body, with their own albedo seeds.
    let looks = [
        render_rgb(body, &posed, &rasters[0], appearance),
        render_rgb(&shells[0].mesh, &upper, &rasters[1], appearance ^ 0xA11),
        render_rgb(&shells[1].mesh, &lower, &rasters[2], appearance ^ 0xB22),
    ];
    let rgb = RgbImage::from_fn(w, h, |x, y| {
        let s = segmentation[(y * w + x) as usize];
        if s == 0 {
            *looks[0].get_pixel(x, y)
        } else {
            *looks[s as usize - 1].get_pixel(x, y)
        }
    });
    let corr = rasters[0].correspondence(body_coloring);
    let instances = segmentation.iter().map(|&s| (s != 0) as u8).collect();
    Ok(LayeredSample {
        sample: Sample {
            rgb,
            mask,
            init: corr.clone(),
            corr,
            depth,
            instances,
            annotations: Vec::new(),
            meta: SampleMeta {
                sequence: 0,
                frame: 0,
                pose: Some(pose.clone()),
                instance_count: 1,
            },
        },
        layers,
        segmentation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::pose::Camera;

    fn setup() -> (TemplateMesh, VertexColoring, [Shell; 2], PoseParams) {
        let body = TemplateMesh::humanoid();
        let col = build_coloring(&body).unwrap();
        let shells = [Shell::upper(&body).unwrap(), Shell::lower(&body).unwrap()];
        let pose = PoseParams::rest(
            body.bones().len(),
            Camera {
                position: [0.4, 1.0, 2.6],
                look_at: [0.0, 0.9, 0.0],
                vfov_deg: 45.0,
                width: 64,
                height: 64,
            },
        );
        (body, col, shells, pose)
    }

    #[test]
    fn zero_offsets_stay_inside_dilated_body() {
        let (body, col, shells, pose) = setup();
        let off = GarmentOffsets { upper: 0.0, lower: 0.0 };
        let l = make_layered(&body, &col, &shells, off, &pose, 1).unwrap();
        let body_mask = Mask::from_corr(&l.sample.corr).dilate(1);
        for layer in &l.layers {
            let m = Mask::from_corr(layer);
            assert!(m.pixels().all(|(x, y)| body_mask.get(x, y)));
        }
    }

    #[test]
    fn segmentation_partitions_union() {
        let (body, col, shells, pose) = setup();
        let l = make_layered(&body, &col, &shells, GarmentOffsets::default(), &pose, 1).unwrap();
        let masks: Vec<Mask> = l.layers.iter().map(Mask::from_corr).collect();
        for (i, &s) in l.segmentation.iter().enumerate() {
            let (x, y) = (i as u32 % 64, i as u32 / 64);
            let owners = masks.iter().filter(|m| m.get(x, y)).count();
            assert_eq!(owners, (s != 0) as usize);
            assert_eq!(l.sample.mask.get(x, y), s != 0);
        }
        assert!(l.segmentation.iter().any(|&s| s == LAYER_UPPER));
        assert!(l.segmentation.iter().any(|&s| s == LAYER_LOWER));
    }
}
