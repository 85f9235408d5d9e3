//! Frame ingestion, preprocessing, windowing, splitting and synthetic data.

mod frames;
pub mod pnm;
pub mod synth;
mod window;

pub use frames::{
    ingest_frames, preprocess, read_manifest, read_sequence, resize_bilinear, write_sequence,
    FrameSequence,
};
pub use synth::{synth_sequence, SynthKind};
pub use window::{chrono_split, make_windows, WindowedDataset};
