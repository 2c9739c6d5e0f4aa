//! Renders a layered frame (body under two garment shells) and takes one
//! training step of a three-head model on it.
//!
//! ```text
//! cargo run --example layered
//! ```

use bodymap::mesh::Surface;
use bodymap::net::ModelConfig;
use bodymap::synth::{generate_layered_sequence, Garments, SynthConfig};
use bodymap::trainer::{build_batch, TrainConfig, TrainData, Trainer};
use candle_core::Device;

fn main() -> bodymap::Result<()> {
    let surface = Surface::builtin();
    let garments = Garments::new(&surface)?;
    let cfg = SynthConfig {
        frames_per_sequence: 2,
        layered: true,
        ..SynthConfig::desk(32)
    };
    let frames = generate_layered_sequence(&surface, &garments, &cfg, 0, 0)?;
    let f = &frames[0];
    let mut counts = [0usize; 4];
    for &s in &f.segmentation {
        counts[s as usize] += 1;
    }
    println!("segmentation (background, body, upper, lower): {counts:?}");

    let model = ModelConfig {
        heads: 3,
        ..ModelConfig::desk(32)
    };
    let tcfg = TrainConfig {
        model,
        batch_size: 2,
        steps: 1,
        ..Default::default()
    };
    let mut trainer = Trainer::new(tcfg.clone(), surface.clone(), &Device::Cpu)?;
    let data = TrainData::Layered(frames);
    let batch = build_batch(&data, &tcfg, &surface, 0)?;
    let before = trainer.train_step(&batch)?;
    let after = trainer.loss(&batch)?.1;
    println!("loss over three heads: {:.4} -> {:.4}", before.total, after.total);
    Ok(())
}
