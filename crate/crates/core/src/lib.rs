//! Dense surface correspondence between images of an articulated body and a
//! colored 3D template.
//!
//! The crate covers the whole loop: procedural ground truth ([`synth`]), a
//! dual-encoder transformer that predicts per-pixel color labels ([`net`]),
//! image-space and geodesic training objectives ([`losses`]), optimization
//! ([`trainer`]) and evaluation ([`metrics`]).

pub mod cli;
pub mod error;
pub mod grid;
pub mod losses;
pub mod mesh;
pub mod metrics;
pub mod net;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
