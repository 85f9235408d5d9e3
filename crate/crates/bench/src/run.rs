//! The variant matrix runner.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nextframe::data::{
    chrono_split, ingest_frames, make_windows, preprocess, synth_sequence, FrameSequence,
};
use nextframe::data::pnm::write_pgm;
use nextframe::metrics::evaluate;
use nextframe::model::{fit_with, predict_all, save_checkpoint, Model};
use nextframe::tensor::write_tensor_file;
use nextframe::{Tensor, WindowedDataset};

use crate::artifacts::{create_dir, num, write_csv, write_manifest, write_text, CONFIG_COPY};
use crate::config::{DataSource, ExperimentConfig, Variant};
use crate::error::{BenchError, Result};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const CURVE_FILE: &str = "loss_curve.csv";
pub const FRAMES_FILE: &str = "frames.csv";
pub const PRED_FCT: &str = "predictions.fct";
pub const TRUTH_FCT: &str = "truth.fct";
pub const PRED_PGM: &str = "predicted_last.pgm";
pub const TRUTH_PGM: &str = "truth_last.pgm";
pub const ERROR_FILE: &str = "error.txt";
pub const CHECKPOINT_DIR: &str = "checkpoint";

pub const SUMMARY_HEADER: [&str; 9] = [
    "variant",
    "architecture",
    "resolution",
    "loss_kind",
    "timestep",
    "train_loss",
    "valid_loss",
    "ssim",
    "status",
];
pub const CURVE_HEADER: [&str; 4] = ["epoch", "train_loss", "valid_loss", "epoch_time_s"];

/// Outcome of one variant. The loss and SSIM fields are `None` when the
/// variant failed.
#[derive(Clone, Debug, PartialEq)]
pub struct VariantResult {
    pub variant: Variant,
    pub train_loss: Option<f64>,
    pub valid_loss: Option<f64>,
    pub ssim: Option<f64>,
    pub train_time_s: f64,
    pub epoch_seconds: Vec<f64>,
    pub error: Option<String>,
}

impl VariantResult {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    fn summary_row(&self) -> Vec<String> {
        let m = &self.variant.model;
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        vec![
            self.variant.name.clone(),
            m.architecture.to_string(),
            m.resolution.to_string(),
            m.loss.to_string(),
            m.timestep.to_string(),
            opt(self.train_loss),
            opt(self.valid_loss),
            opt(self.ssim),
            match &self.error {
                None => "ok".to_string(),
                Some(e) => format!("failed: {e}"),
            },
        ]
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub dir: PathBuf,
    pub results: Vec<VariantResult>,
}

impl RunReport {
    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| r.failed()).count()
    }
}

/// Frame sequences per resolution, prepared before any training so data
/// errors surface first.
pub(crate) fn prepare_data(
    cfg: &ExperimentConfig,
    variants: &[Variant],
) -> Result<BTreeMap<usize, FrameSequence<f32>>> {
    let raw = match &cfg.data {
        DataSource::Manifest(path) => Some(ingest_frames::<f32>(path)?),
        DataSource::Synthetic { .. } => None,
    };
    let mut out = BTreeMap::new();
    for v in variants {
        let r = v.model.resolution;
        if out.contains_key(&r) {
            continue;
        }
        let seq = match (&cfg.data, &raw) {
            (DataSource::Synthetic { kind, frames }, _) => {
                synth_sequence(*kind, *frames, r, cfg.seed)?
            }
            (_, Some(raw)) => preprocess(raw, r)?,
            _ => unreachable!("manifest data was ingested above"),
        };
        out.insert(r, seq);
    }
    Ok(out)
}

pub(crate) fn split(
    seq: &FrameSequence<f32>,
    timestep: usize,
    fraction: f64,
) -> nextframe::Result<(WindowedDataset, WindowedDataset)> {
    chrono_split(&make_windows(seq, timestep)?, fraction)
}

/// Resolves the output directory: explicit override, then the config.
pub fn output_dir(cfg: &ExperimentConfig, over: Option<&Path>) -> PathBuf {
    over.map_or_else(|| cfg.output_dir.clone(), Path::to_path_buf)
}

/// Trains and evaluates every variant, then writes the summary, timings
/// and manifest. Failed variants are recorded in the summary; the caller
/// decides what to do about them.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let data = prepare_data(cfg, &cfg.variants)?;
    let dir = create_dir(out)?;
    write_text(&dir.join(CONFIG_COPY), &cfg.source_text)?;

    let mut results = Vec::with_capacity(cfg.variants.len());
    for v in &cfg.variants {
        info!("variant {}", v.name);
        let vdir = create_dir(&dir.join(&v.name))?;
        let result = run_variant(v, &data[&v.model.resolution], cfg.train_fraction, &vdir)?;
        if let Some(e) = &result.error {
            warn!("variant {} failed: {e}", v.name);
            write_text(&vdir.join(ERROR_FILE), &format!("{e}\n"))?;
        }
        results.push(result);
    }

    let rows: Vec<_> = results.iter().map(VariantResult::summary_row).collect();
    write_csv(&dir.join(SUMMARY_FILE), &SUMMARY_HEADER, &rows)?;
    let timings: Vec<_> = results
        .iter()
        .map(|r| {
            let mean = if r.epoch_seconds.is_empty() {
                0.0
            } else {
                r.epoch_seconds.iter().sum::<f64>() / r.epoch_seconds.len() as f64
            };
            vec![r.variant.name.clone(), num(r.train_time_s), num(mean)]
        })
        .collect();
    write_csv(
        &dir.join(TIMINGS_FILE),
        &["variant", "train_time_s", "mean_epoch_s"],
        &timings,
    )?;
    write_manifest(&dir, cfg.seed)?;
    Ok(RunReport { dir, results })
}

/// Runs one variant into `vdir`. Training and evaluation errors mark the
/// variant failed; only I/O errors on the output directory propagate.
fn run_variant(
    v: &Variant,
    seq: &FrameSequence<f32>,
    fraction: f64,
    vdir: &Path,
) -> Result<VariantResult> {
    let mut result = VariantResult {
        variant: v.clone(),
        train_loss: None,
        valid_loss: None,
        ssim: None,
        train_time_s: 0.0,
        epoch_seconds: Vec::new(),
        error: None,
    };
    let mut curve: Vec<(f64, f64)> = Vec::new();
    let outcome = (|| -> nextframe::Result<_> {
        let (train, valid) = split(seq, v.model.timestep, fraction)?;
        let mut m = Model::new(v.model.clone())?;
        let report = fit_with(&mut m, &train, &valid, |_, t, val| curve.push((t, val)))?;
        let pred = predict_all(&m, &valid, v.model.batch_size.unwrap_or(valid.len()))?;
        Ok((m, report, pred, valid.y))
    })();

    let (m, report, pred, truth) = match outcome {
        Ok(parts) => parts,
        Err(e) => {
            let rows: Vec<_> = curve
                .iter()
                .enumerate()
                .map(|(i, (t, val))| vec![i.to_string(), num(*t), num(*val), String::new()])
                .collect();
            write_csv(&vdir.join(CURVE_FILE), &CURVE_HEADER, &rows)?;
            result.error = Some(e.to_string());
            return Ok(result);
        }
    };
    let rows: Vec<_> = (0..report.train_loss.len())
        .map(|i| {
            vec![
                i.to_string(),
                num(report.train_loss[i]),
                num(report.valid_loss[i]),
                num(report.epoch_seconds[i]),
            ]
        })
        .collect();
    write_csv(&vdir.join(CURVE_FILE), &CURVE_HEADER, &rows)?;
    result.train_time_s = report.total_seconds;
    result.epoch_seconds = report.epoch_seconds.clone();

    let scored = (|| -> nextframe::Result<_> {
        let pf = frames_of(&pred)?;
        let tf = frames_of(&truth)?;
        let eval = evaluate(&pf, &tf)?;
        write_tensor_file(&pred, vdir.join(PRED_FCT))?;
        write_tensor_file(&truth, vdir.join(TRUTH_FCT))?;
        write_pgm(pf.last().expect("validation is non-empty"), &vdir.join(PRED_PGM))?;
        write_pgm(tf.last().expect("validation is non-empty"), &vdir.join(TRUTH_PGM))?;
        save_checkpoint(&m, &vdir.join(CHECKPOINT_DIR))?;
        Ok(eval)
    })();
    match scored {
        Ok(eval) => {
            let mut csv = Vec::new();
            eval.write_csv(&mut csv)
                .map_err(|e| BenchError::io(vdir.join(FRAMES_FILE), e))?;
            write_text(
                &vdir.join(FRAMES_FILE),
                &String::from_utf8(csv).expect("csv is ascii"),
            )?;
            result.train_loss = report.train_loss.last().copied();
            result.valid_loss = report.valid_loss.last().copied();
            result.ssim = Some(eval.ssim);
        }
        Err(e) if e.is_data_error() => return Err(e.into()),
        Err(e) => result.error = Some(e.to_string()),
    }
    Ok(result)
}

/// Splits an N×H×W×1 tensor into its N frames.
pub(crate) fn frames_of(t: &Tensor<f32>) -> nextframe::Result<Vec<Tensor<f32>>> {
    (0..t.dims()[0]).map(|i| t.outer(i)).collect()
}
