//! Seeded poses, motion sequences and the full per-frame pipeline.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::coarse::simulate_coarse_init;
use super::layered::{make_layered, GarmentOffsets, LayeredSample, Shell};
use super::pose::{articulate, Camera, PoseParams};
use super::raster::rasterize;
use super::shading::render_rgb;
use super::{Annotation, Sample, SampleMeta};
use crate::error::Result;
use crate::grid::Mask;
use crate::mesh::Surface;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub image_size: u32,
    pub erosion_px: u32,
    /// Coarse-init jitter radius in mean edge lengths.
    pub noise_gap: u32,
    pub annotations_per_person: usize,
    /// Pixels within which an annotation overrides the init when densifying.
    pub trust_radius: f64,
    pub frames_per_sequence: u32,
    /// Per-frame angular speed scale of the motion, radians.
    pub motion_speed: f64,
    /// Render garment shells and write per-layer correspondences.
    pub layered: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            image_size: 128,
            erosion_px: 2,
            noise_gap: 3,
            annotations_per_person: 100,
            trust_radius: 3.0,
            frames_per_sequence: 10,
            motion_speed: 0.08,
            layered: false,
        }
    }
}

impl SynthConfig {
    /// Small images for CPU experiments. The person spans only a few pixels
    /// across, so the init erodes by one pixel instead of two.
    pub fn desk(image_size: u32) -> Self {
        Self {
            image_size,
            erosion_px: 1,
            ..Self::default()
        }
    }
}

/// Joint ranges as `(bone name prefix, per-axis half range)`.
const RANGES: &[(&str, [f64; 3])] = &[
    ("pelvis", [0.15, 0.6, 0.1]),
    ("spine", [0.25, 0.3, 0.15]),
    ("head", [0.3, 0.5, 0.2]),
    ("upper_arm", [0.6, 0.5, 1.1]),
    ("forearm", [0.2, 1.0, 0.4]),
    ("hand", [0.3, 0.3, 0.3]),
    ("thigh", [0.7, 0.2, 0.25]),
    ("shin", [0.8, 0.05, 0.05]),
    ("foot", [0.3, 0.1, 0.1]),
];

fn range_of(name: &str) -> [f64; 3] {
    RANGES
        .iter()
        .find(|(p, _)| name.starts_with(p))
        .map_or([0.2; 3], |(_, r)| *r)
}

/// A smooth random motion: per-bone base angles plus sinusoids.
#[derive(Debug, Clone)]
pub struct Motion {
    base: Vec<[f64; 3]>,
    amp: Vec<[f64; 3]>,
    phase: Vec<[f64; 3]>,
    yaw: f64,
    cam_dist: f64,
    cam_height: f64,
    speed: f64,
}

impl Motion {
    pub fn random(surface: &Surface, cfg: &SynthConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bones = surface.mesh.bones();
        let mut base = Vec::with_capacity(bones.len());
        let mut amp = Vec::with_capacity(bones.len());
        let mut phase = Vec::with_capacity(bones.len());
        for bone in bones {
            let r = range_of(&bone.name);
            base.push(r.map(|a| rng.random_range(-a..=a) * 0.6));
            amp.push(r.map(|a| rng.random_range(0.0..=a) * 0.5));
            phase.push([0; 3].map(|_| rng.random_range(0.0..std::f64::consts::TAU)));
        }
        Self {
            base,
            amp,
            phase,
            yaw: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            cam_dist: rng.random_range(2.7..3.3),
            cam_height: rng.random_range(0.6..1.2),
            speed: cfg.motion_speed,
        }
    }

    pub fn pose(&self, frame: u32, image_size: u32) -> PoseParams {
        let t = frame as f64 * self.speed;
        let rotations = (0..self.base.len())
            .map(|b| {
                let mut r = [0.0; 3];
                for k in 0..3 {
                    r[k] = self.base[b][k] + self.amp[b][k] * (t * (1.0 + 0.3 * k as f64) + self.phase[b][k]).sin();
                }
                r
            })
            .collect();
        let yaw = self.yaw + 0.5 * t;
        PoseParams {
            rotations,
            root_translation: [0.0; 3],
            camera: Camera {
                position: [self.cam_dist * yaw.sin(), self.cam_height, self.cam_dist * yaw.cos()],
                look_at: [0.0, 0.85, 0.0],
                vfov_deg: 40.0,
                width: image_size,
                height: image_size,
            },
        }
    }
}

/// Renders one frame: correspondence, RGB, coarse init and sparse labels.
/// `appearance` seeds the texture, `seed` the init noise and annotations.
pub fn generate_sample(
    surface: &Surface,
    pose: &PoseParams,
    cfg: &SynthConfig,
    appearance: u64,
    seed: u64,
    meta: SampleMeta,
) -> Result<Sample> {
    pose.validate()?;
    let posed = articulate(&surface.mesh, pose)?;
    let r = rasterize(&posed, surface.mesh.faces(), &surface.coloring, &pose.camera)?;
    let rgb = render_rgb(&surface.mesh, &posed, &r.raster, appearance);
    let init = simulate_coarse_init(&r.corr, &r.mask, cfg.erosion_px, cfg.noise_gap, seed ^ 0x5eed_0002, surface);
    let annotations = annotate(&r.mask, |x, y| r.raster.vertex_at(x, y), cfg.annotations_per_person, seed);
    let instances = r.mask.as_slice().iter().map(|&m| m as u8).collect();
    Ok(Sample {
        rgb,
        mask: r.mask,
        corr: r.corr,
        init,
        depth: r.depth,
        instances,
        annotations,
        meta: SampleMeta {
            pose: Some(pose.clone()),
            ..meta
        },
    })
}

/// `k` distinct mask pixels drawn uniformly, with their vertices, sorted.
fn annotate(mask: &Mask, vertex_at: impl Fn(u32, u32) -> Option<u32>, k: usize, seed: u64) -> Vec<Annotation> {
    let fg: Vec<(u32, u32)> = mask.pixels().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0003);
    let mut out: Vec<Annotation> = sample_indices(&mut rng, fg.len(), k.min(fg.len()))
        .into_iter()
        .map(|i| {
            let (x, y) = fg[i];
            Annotation {
                x,
                y,
                vertex: vertex_at(x, y).expect("foreground pixel") as usize,
            }
        })
        .collect();
    out.sort();
    out
}

/// The two garment shells of a template and their offsets.
#[derive(Debug, Clone)]
pub struct Garments {
    pub shells: [Shell; 2],
    pub offsets: GarmentOffsets,
}

impl Garments {
    pub fn new(surface: &Surface) -> Result<Self> {
        Ok(Self {
            shells: [Shell::upper(&surface.mesh)?, Shell::lower(&surface.mesh)?],
            offsets: GarmentOffsets::default(),
        })
    }
}

/// Layered counterpart of [`generate_sample`]: garments over the body, a
/// coarse init and annotations from the body correspondence.
pub fn generate_layered_sample(
    surface: &Surface,
    garments: &Garments,
    pose: &PoseParams,
    cfg: &SynthConfig,
    appearance: u64,
    seed: u64,
    meta: SampleMeta,
) -> Result<LayeredSample> {
    pose.validate()?;
    let mut ls = make_layered(&surface.mesh, &surface.coloring, &garments.shells, garments.offsets, pose, appearance)?;
    let body = Mask::from_corr(&ls.sample.corr);
    ls.sample.init = simulate_coarse_init(&ls.sample.corr, &body, cfg.erosion_px, cfg.noise_gap, seed ^ 0x5eed_0002, surface);
    ls.sample.annotations = annotate(
        &body,
        |x, y| surface.decode(ls.sample.corr.get_pixel(x, y).0).map(|v| v as u32),
        cfg.annotations_per_person,
        seed,
    );
    ls.sample.meta = SampleMeta {
        pose: Some(pose.clone()),
        ..meta
    };
    Ok(ls)
}

/// Seed of frame `frame` in sequence `sequence` under a dataset seed.
pub fn frame_seed(seed: u64, sequence: u32, frame: u32) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((sequence as u64) << 32 | frame as u64)
}

/// Pose, appearance seed, frame seed and metadata of every frame of one
/// motion sequence. Appearance is per sequence so a person keeps their look.
fn sequence_frames(surface: &Surface, cfg: &SynthConfig, seed: u64, sequence: u32) -> Vec<(PoseParams, u64, u64, SampleMeta)> {
    let motion = Motion::random(surface, cfg, frame_seed(seed, sequence, u32::MAX));
    let look = frame_seed(seed, sequence, u32::MAX);
    (0..cfg.frames_per_sequence)
        .map(|frame| {
            let meta = SampleMeta {
                sequence,
                frame,
                pose: None,
                instance_count: 1,
            };
            (motion.pose(frame, cfg.image_size), look, frame_seed(seed, sequence, frame), meta)
        })
        .collect()
}

/// All frames of one motion sequence.
pub fn generate_sequence(surface: &Surface, cfg: &SynthConfig, seed: u64, sequence: u32) -> Result<Vec<Sample>> {
    sequence_frames(surface, cfg, seed, sequence)
        .into_iter()
        .map(|(pose, look, s, meta)| generate_sample(surface, &pose, cfg, look, s, meta))
        .collect()
}

/// All frames of one motion sequence with garment layers.
pub fn generate_layered_sequence(
    surface: &Surface,
    garments: &Garments,
    cfg: &SynthConfig,
    seed: u64,
    sequence: u32,
) -> Result<Vec<LayeredSample>> {
    sequence_frames(surface, cfg, seed, sequence)
        .into_iter()
        .map(|(pose, look, s, meta)| generate_layered_sample(surface, garments, &pose, cfg, look, s, meta))
        .collect()
}
