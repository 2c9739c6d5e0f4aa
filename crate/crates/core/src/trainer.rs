//! Optimization loop: batch assembly, pretrain and fine-tune targets,
//! AdamW with linear warmup, JSON-lines logging and checkpoints.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;
use std::time::Instant;

use candle_core::{DType, Device};
use candle_nn::optim::{AdamW, Optimizer, ParamsAdamW};
use image::RgbImage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::losses::{head_loss, LossBreakdown, LossWeights, Target};
use crate::mesh::Surface;
use crate::net::checkpoint::{self, CheckpointInfo};
use crate::net::{BodyMapNet, Inputs, ModelConfig};
use crate::synth::{augment, densify_sparse_annotations, LayeredSample, Recipe, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneMode {
    /// Loss only on annotated pixels.
    Sparse,
    /// Loss on the densified pseudo ground truth over the whole mask.
    Dense,
}

/// Per-recipe probabilities. Recipes are drawn independently and applied
/// in the order multi-person, upper crop, rotation, hue shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub multi_person: f64,
    pub upper_crop: f64,
    pub rotate: f64,
    pub hue_shift: f64,
    pub max_rotation_deg: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            multi_person: 0.2,
            upper_crop: 0.2,
            rotate: 0.2,
            hue_shift: 0.2,
            max_rotation_deg: 30.0,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self {
            multi_person: 0.0,
            upper_crop: 0.0,
            rotate: 0.0,
            hue_shift: 0.0,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("multi_person", self.multi_person),
            ("upper_crop", self.upper_crop),
            ("rotate", self.rotate),
            ("hue_shift", self.hue_shift),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("augment.{name} = {p} is not a probability")));
            }
        }
        if !(self.max_rotation_deg >= 0.0 && self.max_rotation_deg.is_finite()) {
            return Err(Error::Config("augment.max_rotation_deg must be finite and >= 0".into()));
        }
        Ok(())
    }

    fn recipes(&self, rng: &mut impl Rng) -> Vec<Recipe> {
        let mut out = Vec::new();
        if rng.random_bool(self.multi_person) {
            out.push(Recipe::MultiPerson(2));
        }
        if rng.random_bool(self.upper_crop) {
            out.push(Recipe::UpperCrop);
        }
        if rng.random_bool(self.rotate) {
            let a = self.max_rotation_deg;
            out.push(Recipe::Rotate(if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 }));
        }
        if rng.random_bool(self.hue_shift) {
            out.push(Recipe::HueShift(rng.random_range(0..360)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub phase: Phase,
    pub finetune_mode: FinetuneMode,
    pub lr: f64,
    /// Fraction of `steps` spent ramping the learning rate up linearly.
    pub warmup_fraction: f64,
    pub steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossWeights,
    pub model: ModelConfig,
    /// Dataset directory holding a manifest.
    pub data: PathBuf,
    /// Starting weights; required for fine-tuning.
    pub init_checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Steps between checkpoints; 0 writes only the final one.
    pub checkpoint_every: u64,
    pub augment: AugmentConfig,
    /// Radius within which an annotation overrides the init when densifying.
    pub trust_radius: f64,
    /// Batches prepared ahead of the optimizer.
    pub queue_depth: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            phase: Phase::Pretrain,
            finetune_mode: FinetuneMode::Dense,
            lr: 1e-3,
            warmup_fraction: 0.05,
            steps: 2000,
            batch_size: 4,
            seed: 0,
            loss: LossWeights::default(),
            model: ModelConfig::desk(32),
            data: PathBuf::from("data"),
            init_checkpoint: None,
            out_dir: PathBuf::from("runs/default"),
            checkpoint_every: 500,
            augment: AugmentConfig::default(),
            trust_radius: 3.0,
            queue_depth: 4,
        }
    }
}

impl TrainConfig {
    /// Checks rates, counts and the model; fine-tuning also needs
    /// `init_checkpoint`.
    pub fn validate(&self) -> Result<()> {
        self.validate_hyperparameters()?;
        if self.phase == Phase::Finetune && self.init_checkpoint.is_none() {
            return Err(Error::Config("fine-tuning requires init_checkpoint".into()));
        }
        Ok(())
    }

    fn validate_hyperparameters(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr = {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config("warmup_fraction must lie in [0, 1)".into()));
        }
        if self.steps == 0 || self.batch_size == 0 || self.queue_depth == 0 {
            return Err(Error::Config("steps, batch_size and queue_depth must be positive".into()));
        }
        if !(self.trust_radius >= 0.0) {
            return Err(Error::Config("trust_radius must be >= 0".into()));
        }
        self.loss.validate()?;
        self.augment.validate()?;
        self.model.validate()
    }

    pub fn warmup_steps(&self) -> u64 {
        (self.warmup_fraction * self.steps as f64).ceil() as u64
    }

    /// Learning rate of the step with zero-based index `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        let warm = self.warmup_steps();
        if step < warm {
            self.lr * (step + 1) as f64 / warm as f64
        } else {
            self.lr
        }
    }
}

/// Training images: plain samples train head 0, layered samples train all
/// three heads.
#[derive(Debug, Clone)]
pub enum TrainData {
    Plain(Vec<Sample>),
    Layered(Vec<LayeredSample>),
}

impl TrainData {
    pub fn len(&self) -> usize {
        match self {
            TrainData::Plain(v) => v.len(),
            TrainData::Layered(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn image_size(&self, i: usize) -> (u32, u32) {
        match self {
            TrainData::Plain(v) => v[i].rgb.dimensions(),
            TrainData::Layered(v) => v[i].sample.rgb.dimensions(),
        }
    }
}

/// Network inputs and per-head supervision for one image.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub rgb: RgbImage,
    pub init: RgbImage,
    pub mask: Mask,
    pub targets: Vec<Target>,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub step: u64,
    pub items: Vec<BatchItem>,
}

/// Full supervision from a rendered sample: GT everywhere on the mask.
pub fn pretrain_target(sample: &Sample) -> Target {
    Target {
        corr: sample.corr.clone(),
        supervised: sample.mask.clone(),
        silhouette: sample.mask.clone(),
    }
}

/// Fine-tune supervision from the sample's sparse annotations. The dense
/// GT corr is never read.
pub fn build_finetune_target(sample: &Sample, mode: FinetuneMode, surface: &Surface, trust_radius: f64) -> Result<Target> {
    if sample.annotations.is_empty() {
        return Err(Error::Dataset(format!(
            "sample seq {} frame {} has no annotations to fine-tune on",
            sample.meta.sequence, sample.meta.frame
        )));
    }
    let (w, h) = sample.mask.dims();
    match mode {
        FinetuneMode::Sparse => {
            let mut corr = RgbImage::new(w, h);
            let mut supervised = Mask::new(w, h);
            for a in &sample.annotations {
                corr.put_pixel(a.x, a.y, image::Rgb(surface.color(a.vertex)));
                supervised.set(a.x, a.y, true);
            }
            Ok(Target {
                corr,
                supervised,
                silhouette: sample.mask.clone(),
            })
        }
        FinetuneMode::Dense => Ok(Target {
            corr: densify_sparse_annotations(&sample.annotations, &sample.init, &sample.mask, &surface.coloring, trust_radius)?,
            supervised: sample.mask.clone(),
            silhouette: sample.mask.clone(),
        }),
    }
}

/// Body target plus one target per garment layer.
pub fn layered_targets(ls: &LayeredSample) -> Vec<Target> {
    let body = Mask::from_corr(&ls.sample.corr);
    let mut out = vec![Target {
        corr: ls.sample.corr.clone(),
        supervised: body.clone(),
        silhouette: body,
    }];
    for layer in &ls.layers[1..] {
        let m = Mask::from_corr(layer);
        out.push(Target {
            corr: layer.clone(),
            supervised: m.clone(),
            silhouette: m,
        });
    }
    out
}

/// Dataset indices of batch `step`: consecutive slices of a fresh seeded
/// permutation per epoch.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, step: u64) -> Vec<usize> {
    let mut cached: Option<(u64, Vec<usize>)> = None;
    (0..batch_size)
        .map(|j| {
            let g = step * batch_size as u64 + j as u64;
            let epoch = g / n as u64;
            if cached.as_ref().map(|c| c.0) != Some(epoch) {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(seed, epoch, 0x9e37)));
                cached = Some((epoch, perm));
            }
            cached.as_ref().expect("permutation").1[(g % n as u64) as usize]
        })
        .collect()
}

fn mix(a: u64, b: u64, c: u64) -> u64 {
    let mut x = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ c.wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    x ^= x >> 31;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^ (x >> 29)
}

fn augmented(sample: &Sample, data: &[Sample], cfg: &AugmentConfig, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = sample.clone();
    for recipe in cfg.recipes(&mut rng) {
        let companions: Vec<Sample> = match recipe {
            Recipe::MultiPerson(k) => (1..k).map(|_| data[rng.random_range(0..data.len())].clone()).collect(),
            _ => Vec::new(),
        };
        // A recipe that empties the crop is skipped rather than failing the batch.
        if let Ok(s) = augment(&out, &companions, recipe, rng.random()) {
            if !s.mask.is_empty() {
                out = s;
            }
        }
    }
    out
}

/// Assembles batch `step`. Deterministic in `(cfg.seed, step)`.
pub fn build_batch(data: &TrainData, cfg: &TrainConfig, surface: &Surface, step: u64) -> Result<Batch> {
    if data.is_empty() {
        return Err(Error::Dataset("no training samples".into()));
    }
    let idx = batch_indices(data.len(), cfg.batch_size, cfg.seed, step);
    let items = idx
        .par_iter()
        .enumerate()
        .map(|(j, &i)| -> Result<BatchItem> {
            match data {
                TrainData::Plain(samples) => {
                    let seed = mix(cfg.seed, step, j as u64 + 1);
                    let mut s = augmented(&samples[i], samples, &cfg.augment, seed);
                    let target = match cfg.phase {
                        Phase::Pretrain => pretrain_target(&s),
                        Phase::Finetune => {
                            if s.annotations.is_empty() {
                                // Augmentation cropped every annotation away.
                                s = samples[i].clone();
                            }
                            build_finetune_target(&s, cfg.finetune_mode, surface, cfg.trust_radius)?
                        }
                    };
                    Ok(BatchItem {
                        rgb: s.rgb,
                        init: s.init,
                        mask: s.mask,
                        targets: vec![target],
                    })
                }
                TrainData::Layered(samples) => {
                    let ls = &samples[i];
                    Ok(BatchItem {
                        rgb: ls.sample.rgb.clone(),
                        init: ls.sample.init.clone(),
                        mask: ls.sample.mask.clone(),
                        targets: layered_targets(ls),
                    })
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Batch { step, items })
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub cls: f64,
    pub sil: f64,
    pub geo: f64,
    pub con: f64,
    pub total: f64,
    pub lr: f64,
    /// Seconds since `fit` started.
    pub wall: f64,
}

pub struct Trainer {
    pub net: BodyMapNet,
    pub cfg: TrainConfig,
    pub surface: Surface,
    /// Completed optimizer steps.
    pub step: u64,
    opt: AdamW,
}

impl Trainer {
    /// Fresh weights for pretraining, `init_checkpoint` otherwise.
    pub fn new(cfg: TrainConfig, surface: Surface, device: &Device) -> Result<Self> {
        cfg.validate()?;
        let net = match &cfg.init_checkpoint {
            Some(path) => checkpoint::load(path, Some(&cfg.model), device)?.0,
            None => BodyMapNet::new(cfg.model.clone(), cfg.seed, DType::F32, device)?,
        };
        Self::with_net(net, cfg, surface)
    }

    /// Trains an existing network. The checkpoint requirement of
    /// fine-tuning is waived since the weights are given.
    pub fn with_net(net: BodyMapNet, cfg: TrainConfig, surface: Surface) -> Result<Self> {
        cfg.validate_hyperparameters()?;
        if net.cfg != cfg.model {
            return Err(Error::Config("network does not match the configured model".into()));
        }
        let opt = AdamW::new(
            net.params.all_vars(),
            ParamsAdamW {
                lr: cfg.lr_at(0),
                weight_decay: 0.0,
                ..Default::default()
            },
        )?;
        Ok(Self {
            net,
            cfg,
            surface,
            step: 0,
            opt,
        })
    }

    /// Loss of `batch` summed over heads, with the per-term values.
    pub fn loss(&self, batch: &Batch) -> Result<(candle_core::Tensor, LossBreakdown)> {
        let size = self.cfg.model.image_size as u32;
        let heads = self.cfg.model.heads;
        for it in &batch.items {
            if it.rgb.dimensions() != (size, size) {
                return Err(Error::Shape(format!(
                    "batch image {:?} does not match model size {size}",
                    it.rgb.dimensions()
                )));
            }
            if it.targets.len() != heads {
                return Err(Error::Config(format!(
                    "batch carries {} targets per image, model has {heads} heads",
                    it.targets.len()
                )));
            }
        }
        let inputs = Inputs::new(
            &batch.items.iter().map(|it| (&it.rgb, &it.init, &it.mask)).collect::<Vec<_>>(),
            self.net.dtype(),
            self.net.device(),
        )?;
        let logits = self.net.forward(&inputs)?;
        let mut total: Option<candle_core::Tensor> = None;
        let mut sum = LossBreakdown::default();
        for h in 0..heads {
            let targets: Vec<&Target> = batch.items.iter().map(|it| &it.targets[h]).collect();
            let surface = (h == 0).then_some(&self.surface);
            let (t, b) = head_loss(
                &logits.color[h],
                &logits.fg[h],
                &targets,
                surface,
                &self.cfg.loss,
                mix(self.cfg.seed, batch.step, 0xc0),
            )?;
            total = Some(match total {
                Some(acc) => (acc + t)?,
                None => t,
            });
            sum.cls += b.cls;
            sum.sil += b.sil;
            sum.geo += b.geo;
            sum.con += b.con;
            sum.total += b.total;
        }
        Ok((total.expect("at least one head"), sum))
    }

    /// One AdamW step on the batch's total loss.
    pub fn train_step(&mut self, batch: &Batch) -> Result<LossBreakdown> {
        let (total, breakdown) = self.loss(batch)?;
        self.opt.set_learning_rate(self.cfg.lr_at(self.step));
        self.opt.backward_step(&total)?;
        self.step += 1;
        Ok(breakdown)
    }

    /// Runs the remaining steps up to `cfg.steps`. Batches are assembled on
    /// a loader thread feeding a bounded queue. Each step is appended to
    /// `log` as one JSON line; with `checkpoint_dir`, checkpoints are
    /// written every `checkpoint_every` steps and at the end as
    /// `model.safetensors`.
    pub fn fit(&mut self, data: &TrainData, mut log: Option<&mut dyn Write>, checkpoint_dir: Option<&Path>) -> Result<Vec<LogRecord>> {
        if data.is_empty() {
            return Err(Error::Dataset("no training samples".into()));
        }
        let size = self.cfg.model.image_size as u32;
        if let Some(i) = (0..data.len()).find(|&i| data.image_size(i) != (size, size)) {
            return Err(Error::Shape(format!(
                "training sample {i} is {:?}, model expects {size}x{size}",
                data.image_size(i)
            )));
        }
        match (data, self.cfg.model.heads) {
            (TrainData::Plain(_), 1) | (TrainData::Layered(_), 3) => {}
            (_, h) => return Err(Error::Config(format!("a {h}-head model cannot train on this data"))),
        }
        let start = Instant::now();
        let first = self.step;
        let cfg = self.cfg.clone();
        // The loader needs its own view while the optimizer holds `self`.
        let surface = self.surface.clone();
        let mut records = Vec::new();
        std::thread::scope(|scope| -> Result<()> {
            let (tx, rx) = sync_channel::<Result<Batch>>(cfg.queue_depth);
            scope.spawn(move || {
                for step in first..cfg.steps {
                    if tx.send(build_batch(data, &cfg, &surface, step)).is_err() {
                        break;
                    }
                }
            });
            for batch in rx {
                let batch = batch?;
                let lr = self.cfg.lr_at(self.step);
                let b = self.train_step(&batch)?;
                let rec = LogRecord {
                    step: self.step,
                    cls: b.cls,
                    sil: b.sil,
                    geo: b.geo,
                    con: b.con,
                    total: b.total,
                    lr,
                    wall: start.elapsed().as_secs_f64(),
                };
                if let Some(w) = log.as_deref_mut() {
                    writeln!(w, "{}", serde_json::to_string(&rec)?)?;
                    w.flush()?;
                }
                log::debug!("step {} total {:.4}", rec.step, rec.total);
                records.push(rec);
                if let (Some(dir), true) = (checkpoint_dir, self.cfg.checkpoint_every > 0) {
                    if self.step % self.cfg.checkpoint_every == 0 && self.step < self.cfg.steps {
                        self.save(&dir.join(format!("step_{:06}.safetensors", self.step)))?;
                    }
                }
            }
            Ok(())
        })?;
        if let Some(dir) = checkpoint_dir {
            self.save(&dir.join("model.safetensors"))?;
        }
        Ok(records)
    }

    /// Atomic checkpoint with the training configuration in its metadata.
    pub fn save(&self, path: &Path) -> Result<()> {
        let info = CheckpointInfo {
            step: self.step,
            extra: Some(serde_json::to_string(&self.cfg)?),
        };
        checkpoint::save(&self.net, &info, path)
    }
}

/// Head-0 predictions for every sample, `batch_size` images at a time.
pub fn predict_samples(net: &BodyMapNet, samples: &[Sample], batch_size: usize) -> Result<Vec<RgbImage>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let items: Vec<_> = chunk.iter().map(|s| (&s.rgb, &s.init, &s.mask)).collect();
        out.extend(net.predict(&items)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::TemplateMesh;
    use crate::synth::generate::{generate_sequence, SynthConfig};

    fn surface() -> Surface {
        Surface::new(TemplateMesh::humanoid()).unwrap()
    }

    fn samples(surface: &Surface, size: u32, n: u32) -> Vec<Sample> {
        let cfg = SynthConfig {
            image_size: size,
            frames_per_sequence: n,
            ..Default::default()
        };
        generate_sequence(surface, &cfg, 11, 0).unwrap()
    }

    fn config(size: usize) -> TrainConfig {
        TrainConfig {
            model: ModelConfig::desk(size),
            batch_size: 2,
            steps: 20,
            augment: AugmentConfig::none(),
            ..Default::default()
        }
    }

    #[test]
    fn warmup_is_linear() {
        let cfg = TrainConfig {
            steps: 100,
            ..config(16)
        };
        assert_eq!(cfg.warmup_steps(), 5);
        assert!((cfg.lr_at(0) - 2e-4).abs() < 1e-15);
        assert!((cfg.lr_at(4) - 1e-3).abs() < 1e-15);
        assert_eq!(cfg.lr_at(50), 1e-3);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let ft = TrainConfig {
            phase: Phase::Finetune,
            ..Default::default()
        };
        assert!(matches!(ft.validate(), Err(Error::Config(_))));
        for bad in [
            TrainConfig { lr: 0.0, ..Default::default() },
            TrainConfig { steps: 0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
        let text = "steps = 10\n[loss]\ncls = 2.0\n";
        let cfg: TrainConfig = toml::from_str(text).unwrap();
        assert_eq!((cfg.steps, cfg.loss.cls, cfg.loss.sil), (10, 2.0, 0.5));
        assert!(toml::from_str::<TrainConfig>("stepz = 1").is_err());
    }

    #[test]
    fn batches_cover_each_epoch_once() {
        let n = 7;
        let mut seen: Vec<usize> = (0..7).flat_map(|s| batch_indices(n, 3, 5, s)).collect();
        // 21 draws = three full epochs.
        seen.sort();
        assert_eq!(seen, (0..n).flat_map(|i| [i; 3]).collect::<Vec<_>>());
        assert_eq!(batch_indices(n, 3, 5, 2), batch_indices(n, 3, 5, 2));
        assert_ne!(batch_indices(n, 7, 5, 0), batch_indices(n, 7, 6, 0));
    }

    #[test]
    fn finetune_targets_follow_mode() {
        let s = surface();
        let sample = &samples(&s, 48, 1)[0];
        let sparse = build_finetune_target(sample, FinetuneMode::Sparse, &s, 3.0).unwrap();
        assert_eq!(sparse.supervised.count(), sample.annotations.len());
        let dense = build_finetune_target(sample, FinetuneMode::Dense, &s, 3.0).unwrap();
        assert_eq!(dense.supervised.count(), sample.mask.count());
        for a in &sample.annotations {
            assert_eq!(dense.corr.get_pixel(a.x, a.y).0, s.color(a.vertex));
            assert_eq!(sparse.corr.get_pixel(a.x, a.y).0, s.color(a.vertex));
        }
        let bare = Sample {
            annotations: vec![],
            ..sample.clone()
        };
        assert!(matches!(
            build_finetune_target(&bare, FinetuneMode::Sparse, &s, 3.0),
            Err(Error::Dataset(_))
        ));
    }

    #[test]
    fn augmented_batches_are_reproducible() {
        let s = surface();
        let data = TrainData::Plain(samples(&s, 32, 3));
        let cfg = TrainConfig {
            augment: AugmentConfig {
                multi_person: 0.5,
                upper_crop: 0.5,
                rotate: 0.5,
                hue_shift: 0.5,
                ..Default::default()
            },
            ..config(32)
        };
        for step in 0..4 {
            let a = build_batch(&data, &cfg, &s, step).unwrap();
            let b = build_batch(&data, &cfg, &s, step).unwrap();
            for (x, y) in a.items.iter().zip(&b.items) {
                assert_eq!(x.rgb, y.rgb);
                assert_eq!(x.targets[0].corr, y.targets[0].corr);
                assert!(!x.mask.is_empty());
            }
        }
    }

    #[test]
    fn zero_weights_leave_parameters_unchanged() {
        let s = surface();
        let data = TrainData::Plain(samples(&s, 16, 2));
        let cfg = TrainConfig {
            loss: LossWeights::default().scaled(0.0),
            ..config(16)
        };
        let net = BodyMapNet::new(cfg.model.clone(), 1, DType::F32, &Device::Cpu).unwrap();
        let before = net.params.deep_clone().unwrap();
        let mut t = Trainer::with_net(net, cfg.clone(), s.clone()).unwrap();
        for step in 0..3 {
            let b = t.train_step(&build_batch(&data, &cfg, &s, step).unwrap()).unwrap();
            assert_eq!(b.total, 0.0);
        }
        for (name, v) in before.tensors() {
            let after = t.net.params.get(&name);
            assert_eq!(v.flatten_all().unwrap().to_vec1::<f32>().unwrap(), after.flatten_all().unwrap().to_vec1::<f32>().unwrap());
        }
    }

    #[test]
    fn repeated_sample_lowers_classification_loss() {
        let s = surface();
        let data = TrainData::Plain(samples(&s, 32, 1));
        let cfg = TrainConfig {
            batch_size: 1,
            ..config(32)
        };
        let mut t = Trainer::with_net(BodyMapNet::new(cfg.model.clone(), 2, DType::F32, &Device::Cpu).unwrap(), cfg.clone(), s.clone()).unwrap();
        let batch = build_batch(&data, &cfg, &s, 0).unwrap();
        let cls: Vec<f64> = (0..20).map(|_| t.train_step(&batch).unwrap().cls).collect();
        for w in cls.windows(2) {
            assert!(w[1] < w[0], "{cls:?}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let s = surface();
        let data = TrainData::Plain(samples(&s, 16, 3));
        let cfg = TrainConfig {
            steps: 5,
            augment: AugmentConfig::default(),
            ..config(16)
        };
        let run = || {
            let mut t = Trainer::new(cfg.clone(), s.clone(), &Device::Cpu).unwrap();
            t.fit(&data, None, None).unwrap();
            t.net.params.tensors()
        };
        let (a, b) = (run(), run());
        for (name, x) in &a {
            let y = &b[name];
            assert_eq!(x.flatten_all().unwrap().to_vec1::<f32>().unwrap(), y.flatten_all().unwrap().to_vec1::<f32>().unwrap(), "{name}");
        }
    }

    #[test]
    fn fit_logs_and_checkpoints() {
        let s = surface();
        let data = TrainData::Plain(samples(&s, 16, 2));
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            steps: 4,
            checkpoint_every: 2,
            ..config(16)
        };
        let mut t = Trainer::new(cfg.clone(), s.clone(), &Device::Cpu).unwrap();
        let mut log = Vec::new();
        let recs = t.fit(&data, Some(&mut log), Some(dir.path())).unwrap();
        let lines: Vec<LogRecord> = String::from_utf8(log)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines, recs);
        assert_eq!(lines.iter().map(|r| r.step).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert!(dir.path().join("step_000002.safetensors").exists());
        let (net, info) = checkpoint::load(&dir.path().join("model.safetensors"), Some(&cfg.model), &Device::Cpu).unwrap();
        assert_eq!(info.step, 4);
        let probe = &data_samples(&data)[0];
        let items = [(&probe.rgb, &probe.init, &probe.mask)];
        assert_eq!(net.predict(&items).unwrap(), t.net.predict(&items).unwrap());
        // Resuming past the last step is a no-op.
        assert!(t.fit(&data, None, None).unwrap().is_empty());
    }

    fn data_samples(d: &TrainData) -> &[Sample] {
        match d {
            TrainData::Plain(v) => v,
            TrainData::Layered(_) => unreachable!(),
        }
    }

    #[test]
    fn layered_data_trains_three_heads() {
        let s = surface();
        let garments = crate::synth::generate::Garments::new(&s).unwrap();
        let scfg = SynthConfig {
            image_size: 16,
            frames_per_sequence: 2,
            ..Default::default()
        };
        let data = TrainData::Layered(crate::synth::generate::generate_layered_sequence(&s, &garments, &scfg, 1, 0).unwrap());
        let mut model = ModelConfig::desk(16);
        model.heads = 3;
        let cfg = TrainConfig {
            steps: 2,
            model,
            ..config(16)
        };
        let mut t = Trainer::new(cfg, s.clone(), &Device::Cpu).unwrap();
        let recs = t.fit(&data, None, None).unwrap();
        assert!(recs.iter().all(|r| r.total.is_finite() && r.total > 0.0));
        let plain = TrainData::Plain(samples(&s, 16, 1));
        assert!(matches!(t.fit(&plain, None, None), Err(Error::Config(_))));
    }
}
