//! On-disk dataset: one directory per sample plus a manifest.
//!
//! ```text
//! <root>/manifest.json
//! <root>/seq0003_f0007/{rgb,mask,corr,init}.png, depth.bin, meta.json
//! ```
//!
//! `depth.bin` holds row-major little-endian `f32` view depths;
//! `instances.png` is only written for multi-person composites. Layered
//! datasets add `layer_{body,upper,lower}.png` and `segmentation.png`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate_layered_sequence, generate_sequence, Garments, SynthConfig};
use super::layered::LayeredSample;
use super::{Annotation, Sample, SampleMeta};
use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::mesh::Surface;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub dir: String,
    pub sequence: u32,
    pub frame: u32,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub mesh_hash: String,
    pub image_size: u32,
    pub seed: u64,
    pub synth: SynthConfig,
    pub samples: Vec<Entry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MetaFile {
    #[serde(flatten)]
    meta: SampleMeta,
    annotations: Vec<Annotation>,
}

/// Number of held-out sequences: a tenth, rounded, at least one when there
/// are two or more sequences.
pub fn test_sequence_count(sequences: u32) -> u32 {
    if sequences < 2 {
        0
    } else {
        ((sequences as f64 * 0.1).round() as u32).max(1)
    }
}

pub fn split_of(sequence: u32, sequences: u32) -> Split {
    if sequence >= sequences - test_sequence_count(sequences) {
        Split::Test
    } else {
        Split::Train
    }
}

fn sample_dir_name(sequence: u32, frame: u32) -> String {
    format!("seq{sequence:04}_f{frame:04}")
}

fn image_error(path: &Path, e: image::ImageError) -> Error {
    Error::Dataset(format!("{}: {e}", path.display()))
}

pub fn write_sample(dir: &Path, s: &Sample) -> Result<()> {
    fs::create_dir_all(dir)?;
    let save_rgb = |name: &str, img: &RgbImage| -> Result<()> {
        let p = dir.join(name);
        img.save(&p).map_err(|e| image_error(&p, e))
    };
    save_rgb("rgb.png", &s.rgb)?;
    save_rgb("corr.png", &s.corr)?;
    save_rgb("init.png", &s.init)?;
    let p = dir.join("mask.png");
    s.mask.to_gray().save(&p).map_err(|e| image_error(&p, e))?;
    if s.meta.instance_count > 1 {
        let p = dir.join("instances.png");
        GrayImage::from_raw(s.width(), s.height(), s.instances.clone())
            .expect("instance buffer matches image size")
            .save(&p)
            .map_err(|e| image_error(&p, e))?;
    }
    let depth: Vec<u8> = s.depth.iter().flat_map(|d| d.to_le_bytes()).collect();
    fs::write(dir.join("depth.bin"), depth)?;
    let meta = MetaFile {
        meta: s.meta.clone(),
        annotations: s.annotations.clone(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

const LAYER_FILES: [&str; 3] = ["layer_body.png", "layer_upper.png", "layer_lower.png"];

pub fn write_layered(dir: &Path, ls: &LayeredSample) -> Result<()> {
    write_sample(dir, &ls.sample)?;
    for (name, img) in LAYER_FILES.iter().zip(&ls.layers) {
        let p = dir.join(name);
        img.save(&p).map_err(|e| image_error(&p, e))?;
    }
    let p = dir.join("segmentation.png");
    GrayImage::from_raw(ls.sample.width(), ls.sample.height(), ls.segmentation.clone())
        .expect("segmentation buffer matches image size")
        .save(&p)
        .map_err(|e| image_error(&p, e))
}

pub fn load_layered(dir: &Path) -> Result<LayeredSample> {
    let sample = load_sample(dir)?;
    let dims = sample.rgb.dimensions();
    let mut layers = Vec::with_capacity(3);
    for name in LAYER_FILES {
        let img = load_rgb(&dir.join(name))?;
        if img.dimensions() != dims {
            return Err(Error::Dataset(format!("{}: {name} size disagrees", dir.display())));
        }
        layers.push(img);
    }
    let sp = dir.join("segmentation.png");
    let seg = image::open(&sp).map_err(|e| image_error(&sp, e))?.to_luma8();
    if seg.dimensions() != dims {
        return Err(Error::Dataset(format!("{}: segmentation size disagrees", dir.display())));
    }
    Ok(LayeredSample {
        sample,
        layers: layers.try_into().expect("three layers"),
        segmentation: seg.into_raw(),
    })
}

fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path).map_err(|e| image_error(path, e))?.to_rgb8())
}

pub fn load_sample(dir: &Path) -> Result<Sample> {
    let rgb = load_rgb(&dir.join("rgb.png"))?;
    let corr = load_rgb(&dir.join("corr.png"))?;
    let init = load_rgb(&dir.join("init.png"))?;
    let mp = dir.join("mask.png");
    let mask = Mask::from_gray(&image::open(&mp).map_err(|e| image_error(&mp, e))?.to_luma8());
    let (w, h) = rgb.dimensions();
    if corr.dimensions() != (w, h) || init.dimensions() != (w, h) || mask.dims() != (w, h) {
        return Err(Error::Dataset(format!("{}: image sizes disagree", dir.display())));
    }
    let meta: MetaFile = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)
        .map_err(|e| Error::Dataset(format!("{}: {e}", dir.join("meta.json").display())))?;
    let n = (w * h) as usize;
    let depth = match fs::read(dir.join("depth.bin")) {
        Ok(bytes) if bytes.len() == 4 * n => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect(),
        Ok(_) => return Err(Error::Dataset(format!("{}: depth.bin has the wrong size", dir.display()))),
        Err(_) => mask.as_slice().iter().map(|&m| if m { 1.0 } else { f32::INFINITY }).collect(),
    };
    let ip = dir.join("instances.png");
    let instances = if ip.exists() {
        image::open(&ip).map_err(|e| image_error(&ip, e))?.to_luma8().into_raw()
    } else {
        mask.as_slice().iter().map(|&m| m as u8).collect()
    };
    for a in &meta.annotations {
        if a.x >= w || a.y >= h || !mask.get(a.x, a.y) {
            return Err(Error::Dataset(format!(
                "{}: annotation ({}, {}) outside the mask",
                dir.display(),
                a.x,
                a.y
            )));
        }
    }
    Ok(Sample {
        rgb,
        mask,
        corr,
        init,
        depth,
        instances,
        annotations: meta.annotations,
        meta: meta.meta,
    })
}

/// Renders `sequences` motion sequences into `out` and writes the manifest.
pub fn generate_dataset(surface: &Surface, cfg: &SynthConfig, sequences: u32, seed: u64, out: &Path) -> Result<Manifest> {
    fs::create_dir_all(out)?;
    let garments = if cfg.layered { Some(Garments::new(surface)?) } else { None };
    let entries: Vec<Vec<Entry>> = (0..sequences)
        .into_par_iter()
        .map(|seq| -> Result<Vec<Entry>> {
            let entry = |frame| Entry {
                dir: sample_dir_name(seq, frame),
                sequence: seq,
                frame,
                split: split_of(seq, sequences),
            };
            let mut entries = Vec::new();
            if let Some(g) = &garments {
                for ls in generate_layered_sequence(surface, g, cfg, seed, seq)? {
                    let e = entry(ls.sample.meta.frame);
                    write_layered(&out.join(&e.dir), &ls)?;
                    entries.push(e);
                }
            } else {
                for s in generate_sequence(surface, cfg, seed, seq)? {
                    let e = entry(s.meta.frame);
                    write_sample(&out.join(&e.dir), &s)?;
                    entries.push(e);
                }
            }
            Ok(entries)
        })
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        mesh_hash: surface.mesh.content_hash(),
        image_size: cfg.image_size,
        seed,
        synth: cfg.clone(),
        samples: entries.into_iter().flatten().collect(),
    };
    fs::write(out.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// A dataset directory opened through its manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        let manifest = serde_json::from_str(&text).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }

    /// Fails unless the dataset was rendered from `surface`'s mesh.
    pub fn check_mesh(&self, surface: &Surface) -> Result<()> {
        let hash = surface.mesh.content_hash();
        if self.manifest.mesh_hash != hash {
            return Err(Error::Dataset(format!(
                "dataset mesh hash {} does not match template {hash}",
                self.manifest.mesh_hash
            )));
        }
        Ok(())
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &Entry> {
        self.manifest.samples.iter().filter(move |e| e.split == split)
    }

    pub fn load(&self, split: Split) -> Result<Vec<Sample>> {
        let entries: Vec<&Entry> = self.entries(split).collect();
        entries.par_iter().map(|e| load_sample(&self.root.join(&e.dir))).collect()
    }

    pub fn load_layered(&self, split: Split) -> Result<Vec<LayeredSample>> {
        if !self.manifest.synth.layered {
            return Err(Error::Dataset(format!("{} was not generated with layers", self.root.display())));
        }
        let entries: Vec<&Entry> = self.entries(split).collect();
        entries.par_iter().map(|e| load_layered(&self.root.join(&e.dir))).collect()
    }
}
