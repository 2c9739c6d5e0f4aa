//! Scores ground truth and the coarse init as predictions on a synthetic
//! sequence and prints the report.
//!
//! ```text
//! cargo run --example evaluate
//! ```

use bodymap::grid::apply_mask;
use bodymap::mesh::Surface;
use bodymap::metrics::{evaluate, EvalConfig};
use bodymap::synth::{generate_sequence, SynthConfig};

fn main() -> bodymap::Result<()> {
    let surface = Surface::builtin();
    let cfg = SynthConfig {
        frames_per_sequence: 16,
        ..SynthConfig::default()
    };
    let frames = generate_sequence(&surface, &cfg, 3, 0)?;
    let eval = EvalConfig::default();

    let gt: Vec<_> = frames.iter().map(|s| s.corr.clone()).collect();
    let init: Vec<_> = frames.iter().map(|s| apply_mask(&s.init, &s.mask)).collect();
    for (name, preds) in [("ground truth", gt), ("coarse init", init)] {
        let r = evaluate(&frames, &preds, &surface, &eval)?;
        println!("{name}");
        for (w, a) in &r.pixel_accuracy {
            println!("  accuracy @ {w:>2} px   {a:6.2}%");
        }
        println!("  AP / AR over GPS    {:.3} / {:.3}", r.ap, r.ar);
        for (k, t) in &r.temporal {
            println!("  temporal @ {k:>2}       {t:6.2}%");
        }
    }
    Ok(())
}
