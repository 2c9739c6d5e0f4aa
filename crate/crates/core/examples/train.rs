//! Overfits the desk model to a handful of synthetic frames and saves a
//! checkpoint.
//!
//! ```text
//! cargo run --example train -- 300 /tmp/overfit.safetensors
//! ```

use std::path::PathBuf;

use bodymap::mesh::Surface;
use bodymap::metrics::pixel_accuracy;
use bodymap::net::ModelConfig;
use bodymap::synth::{generate_sequence, SynthConfig};
use bodymap::trainer::{predict_samples, AugmentConfig, TrainConfig, TrainData, Trainer};
use candle_core::Device;

fn main() -> bodymap::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map_or(300, |s| s.parse().expect("step count"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "overfit.safetensors".into()));

    let surface = Surface::builtin();
    let scfg = SynthConfig {
        frames_per_sequence: 1,
        ..SynthConfig::desk(32)
    };
    let mut samples = Vec::new();
    for q in 0..10 {
        samples.extend(generate_sequence(&surface, &scfg, 1, q)?);
    }
    let cfg = TrainConfig {
        model: ModelConfig::desk(32),
        batch_size: 2,
        steps,
        augment: AugmentConfig::none(),
        ..Default::default()
    };
    let mut trainer = Trainer::new(cfg, surface.clone(), &Device::Cpu)?;
    let log = trainer.fit(&TrainData::Plain(samples.clone()), None, None)?;
    for r in log.iter().step_by(50).chain(log.last()) {
        println!("step {:>5}  total {:.4}  cls {:.4}  geo {:.4}", r.step, r.total, r.cls, r.geo);
    }

    let preds = predict_samples(&trainer.net, &samples, 10)?;
    let acc: f64 = preds
        .iter()
        .zip(&samples)
        .map(|(p, s)| pixel_accuracy(p, &s.corr, &s.mask, &surface, 5))
        .sum::<bodymap::Result<f64>>()?
        / samples.len() as f64;
    println!("window-5 accuracy on the training frames: {acc:.1}%");
    trainer.save(&out)?;
    println!("saved {}", out.display());
    Ok(())
}
