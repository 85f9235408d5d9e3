//! Next-frame prediction from a saved checkpoint.

use std::path::{Path, PathBuf};

use nextframe::data::pnm::write_pgm;
use nextframe::data::{ingest_frames, preprocess};
use nextframe::model::{load_checkpoint, predict_next};
use nextframe::tensor::write_tensor_file;
use nextframe::Model;

use crate::artifacts::create_dir;
use crate::error::Result;

/// Predicts the frame after the last `timestep` frames listed in
/// `manifest` and writes it to `out` as `next_frame.pgm` and
/// `next_frame.fct`. Returns the two paths.
pub fn predict_from_checkpoint(
    checkpoint: &Path,
    manifest: &Path,
    out: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let m: Model = load_checkpoint(checkpoint)?;
    let cfg = m.config();
    let seq = preprocess(&ingest_frames::<f32>(manifest)?, cfg.resolution)?;
    let window = seq.tail(cfg.timestep)?;
    let frame = predict_next(&m, &window)?;
    let dir = create_dir(out)?;
    let pgm = dir.join("next_frame.pgm");
    let fct = dir.join("next_frame.fct");
    write_pgm(&frame, &pgm)?;
    write_tensor_file(&frame, &fct)?;
    Ok((pgm, fct))
}
