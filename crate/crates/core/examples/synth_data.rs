//! Renders a small synthetic dataset, reloads it and densifies the sparse
//! annotations of one frame.
//!
//! ```text
//! cargo run --example synth_data -- /tmp/bodymap-data
//! ```

use std::path::PathBuf;

use bodymap::mesh::Surface;
use bodymap::synth::dataset::{generate_dataset, Dataset, Split};
use bodymap::synth::densify::densify_sparse_annotations;
use bodymap::synth::SynthConfig;

fn main() -> bodymap::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synth-data".into()));
    let surface = Surface::builtin();
    let cfg = SynthConfig {
        frames_per_sequence: 4,
        ..SynthConfig::desk(64)
    };
    let manifest = generate_dataset(&surface, &cfg, 5, 0, &out)?;
    println!("{} samples in {}", manifest.samples.len(), out.display());

    let ds = Dataset::open(&out)?;
    for split in [Split::Train, Split::Test] {
        let samples = ds.load(split)?;
        let fg: usize = samples.iter().map(|s| s.mask.count()).sum();
        println!("{split:?}: {} frames, {} foreground pixels", samples.len(), fg);
    }

    let s = &ds.load(Split::Train)?[0];
    let dense = densify_sparse_annotations(&s.annotations, &s.init, &s.mask, &surface.coloring, cfg.trust_radius)?;
    let covered = s.mask.pixels().filter(|&(x, y)| dense.get_pixel(x, y).0 != [0, 0, 0]).count();
    println!(
        "frame 0: {} annotations, init covers {} of {} pixels, densified covers {covered}",
        s.annotations.len(),
        s.mask.pixels().filter(|&(x, y)| s.init.get_pixel(x, y).0 != [0, 0, 0]).count(),
        s.mask.count()
    );
    dense.save(out.join("densified.png"))?;
    Ok(())
}
