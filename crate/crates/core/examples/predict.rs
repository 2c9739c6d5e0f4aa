//! Runs a model on one synthetic frame and writes input, init, prediction
//! and ground truth side by side.
//!
//! ```text
//! cargo run --example predict -- overfit.safetensors panel.png
//! ```
//!
//! Without a checkpoint an untrained network is used.

use std::path::Path;

use bodymap::mesh::Surface;
use bodymap::net::checkpoint;
use bodymap::net::{BodyMapNet, ModelConfig};
use bodymap::synth::{generate_sequence, SynthConfig};
use candle_core::{DType, Device};
use image::RgbImage;

fn main() -> bodymap::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let net = match args.first() {
        Some(p) => checkpoint::load(Path::new(p), None, &Device::Cpu)?.0,
        None => BodyMapNet::new(ModelConfig::desk(32), 0, DType::F32, &Device::Cpu)?,
    };
    let out = args.get(1).map_or("panel.png", String::as_str);
    let size = net.cfg.image_size as u32;

    let surface = Surface::builtin();
    let cfg = SynthConfig {
        frames_per_sequence: 1,
        ..SynthConfig::desk(size)
    };
    let s = generate_sequence(&surface, &cfg, 1, 0)?.remove(0);
    let pred = net.predict(&[(&s.rgb, &s.init, &s.mask)])?.remove(0);

    let panels = [&s.rgb, &s.init, &pred, &s.corr];
    let mut canvas = RgbImage::new(size * panels.len() as u32, size);
    for (i, p) in panels.iter().enumerate() {
        image::imageops::replace(&mut canvas, *p, (i as u32 * size) as i64, 0);
    }
    canvas.save(out)?;
    println!("wrote {out} ({} foreground pixels)", s.mask.count());
    Ok(())
}
