//! Procedural ground truth: posing, rasterization, shading, a simulated
//! coarse initializer, pseudo-GT densification and augmentation.

pub mod augment;
pub mod coarse;
pub mod dataset;
pub mod densify;
pub mod generate;
pub mod layered;
pub mod pose;
pub mod raster;
pub mod shading;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::grid::Mask;

pub use augment::{augment, Recipe};
pub use coarse::simulate_coarse_init;
pub use densify::densify_sparse_annotations;
pub use generate::{generate_layered_sample, generate_layered_sequence, generate_sample, generate_sequence, Garments, SynthConfig};
pub use layered::{make_layered, GarmentOffsets, LayeredSample};
pub use pose::{articulate, Camera, PoseParams};
pub use raster::rasterize;
pub use shading::render_rgb;

/// One sparse pixel-to-vertex label, serialized as `[[x, y], vertex]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "([u32; 2], usize)", into = "([u32; 2], usize)")]
pub struct Annotation {
    pub x: u32,
    pub y: u32,
    pub vertex: usize,
}

impl From<([u32; 2], usize)> for Annotation {
    fn from(([x, y], vertex): ([u32; 2], usize)) -> Self {
        Self { x, y, vertex }
    }
}

impl From<Annotation> for ([u32; 2], usize) {
    fn from(a: Annotation) -> Self {
        ([a.x, a.y], a.vertex)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub sequence: u32,
    pub frame: u32,
    /// Posing and camera of the (first) person; absent after compositing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseParams>,
    #[serde(default = "one")]
    pub instance_count: u32,
}

fn one() -> u32 {
    1
}

/// One training or evaluation unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub rgb: RgbImage,
    pub mask: Mask,
    /// Ground-truth correspondence colors; black off the body.
    pub corr: RgbImage,
    /// Coarse correspondence initialization.
    pub init: RgbImage,
    /// View depth per pixel, infinite on background.
    pub depth: Vec<f32>,
    /// Per-pixel person id, 0 on background.
    pub instances: Vec<u8>,
    pub annotations: Vec<Annotation>,
    pub meta: SampleMeta,
}

impl Sample {
    pub fn width(&self) -> u32 {
        self.rgb.width()
    }

    pub fn height(&self) -> u32 {
        self.rgb.height()
    }
}
