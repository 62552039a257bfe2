//! Feature files, labels, dataset manifests and the synthetic generator.

pub mod avsf;
pub mod labels;
pub mod manifest;
pub mod record;
pub mod synth;

pub use manifest::{load_dataset, write_dataset, DatasetManifest, ManifestEntry};
pub use record::{pad_to_multiple, PaddedVideo, VideoRecord, MIN_FRAMES};
pub use synth::{generate_synthetic, SynthConfig};
