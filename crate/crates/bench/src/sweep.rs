//! Timestep sweeps: every variant retrained at each timestep of the range,
//! with per-epoch mean and population standard deviation across the runs.

use std::path::{Path, PathBuf};

use log::{info, warn};
use nextframe::model::{fit_with, Model};

use crate::artifacts::{create_dir, num, write_csv, write_manifest, write_text, CONFIG_COPY};
use crate::config::ExperimentConfig;
use crate::error::{BenchError, Result};
use crate::run::{prepare_data, split};

pub const SWEEP_DIR: &str = "sweep";
pub const SWEEP_SUMMARY: &str = "sweep_summary.csv";
pub const STATS_FILE: &str = "stats.csv";
pub const STATS_HEADER: [&str; 6] = [
    "epoch",
    "train_mean",
    "train_std",
    "valid_mean",
    "valid_std",
    "runs",
];
/// Epochs averaged for the `tail_train_loss` column.
pub const TAIL_EPOCHS: usize = 10;

pub fn curve_file(timestep: usize) -> String {
    format!("t{timestep:02}.csv")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRun {
    pub timestep: usize,
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    pub error: Option<String>,
}

impl SweepRun {
    /// Mean training loss over the last [`TAIL_EPOCHS`] epochs.
    pub fn tail_train_loss(&self) -> Option<f64> {
        if self.error.is_some() || self.train_loss.is_empty() {
            return None;
        }
        let tail = &self.train_loss[self.train_loss.len().saturating_sub(TAIL_EPOCHS)..];
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub train_mean: f64,
    pub train_std: f64,
    pub valid_mean: f64,
    pub valid_std: f64,
    pub runs: usize,
}

#[derive(Clone, Debug)]
pub struct VariantSweep {
    pub name: String,
    pub runs: Vec<SweepRun>,
    pub stats: Vec<EpochStats>,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub dir: PathBuf,
    pub variants: Vec<VariantSweep>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.variants
            .iter()
            .flat_map(|v| &v.runs)
            .filter(|r| r.error.is_some())
            .count()
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-epoch statistics over the runs that completed every epoch.
pub fn epoch_stats(runs: &[SweepRun]) -> Vec<EpochStats> {
    let done: Vec<&SweepRun> = runs.iter().filter(|r| r.error.is_none()).collect();
    let epochs = done.iter().map(|r| r.train_loss.len()).min().unwrap_or(0);
    (0..epochs)
        .map(|e| {
            let train: Vec<f64> = done.iter().map(|r| r.train_loss[e]).collect();
            let valid: Vec<f64> = done.iter().map(|r| r.valid_loss[e]).collect();
            let (train_mean, train_std) = mean_std(&train);
            let (valid_mean, valid_std) = mean_std(&valid);
            EpochStats {
                train_mean,
                train_std,
                valid_mean,
                valid_std,
                runs: done.len(),
            }
        })
        .collect()
}

/// Runs the sweep into `out/sweep`. Each variant keeps its settings except
/// the timestep.
pub fn timestep_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<SweepReport> {
    let range = cfg
        .sweep
        .clone()
        .ok_or_else(|| BenchError::config("sweep", "missing [sweep] table"))?;
    let data = prepare_data(cfg, &cfg.variants)?;
    let dir = create_dir(&out.join(SWEEP_DIR))?;
    write_text(&dir.join(CONFIG_COPY), &cfg.source_text)?;

    let mut variants = Vec::new();
    let mut summary = Vec::new();
    for v in &cfg.variants {
        let vdir = create_dir(&dir.join(&v.name))?;
        let seq = &data[&v.model.resolution];
        let mut runs = Vec::new();
        for t in range.clone() {
            info!("sweep {} timestep {t}", v.name);
            let mut model_cfg = v.model.clone();
            model_cfg.timestep = t;
            let mut run = SweepRun {
                timestep: t,
                train_loss: Vec::new(),
                valid_loss: Vec::new(),
                error: None,
            };
            let outcome = (|| -> nextframe::Result<()> {
                let (train, valid) = split(seq, t, cfg.train_fraction)?;
                let mut m = Model::new(model_cfg)?;
                fit_with(&mut m, &train, &valid, |_, tl, vl| {
                    run.train_loss.push(tl);
                    run.valid_loss.push(vl);
                })?;
                Ok(())
            })();
            if let Err(e) = outcome {
                warn!("sweep {} timestep {t} failed: {e}", v.name);
                run.error = Some(e.to_string());
            }
            let rows: Vec<_> = run
                .train_loss
                .iter()
                .zip(&run.valid_loss)
                .enumerate()
                .map(|(i, (a, b))| vec![i.to_string(), num(*a), num(*b)])
                .collect();
            write_csv(
                &vdir.join(curve_file(t)),
                &["epoch", "train_loss", "valid_loss"],
                &rows,
            )?;
            summary.push(vec![
                v.name.clone(),
                t.to_string(),
                run.train_loss.last().map(|x| num(*x)).unwrap_or_default(),
                run.valid_loss.last().map(|x| num(*x)).unwrap_or_default(),
                run.tail_train_loss().map(num).unwrap_or_default(),
                match &run.error {
                    None => "ok".to_string(),
                    Some(e) => format!("failed: {e}"),
                },
            ]);
            runs.push(run);
        }
        let stats = epoch_stats(&runs);
        let rows: Vec<_> = stats
            .iter()
            .enumerate()
            .map(|(i, s)| {
                vec![
                    i.to_string(),
                    num(s.train_mean),
                    num(s.train_std),
                    num(s.valid_mean),
                    num(s.valid_std),
                    s.runs.to_string(),
                ]
            })
            .collect();
        write_csv(&vdir.join(STATS_FILE), &STATS_HEADER, &rows)?;
        variants.push(VariantSweep {
            name: v.name.clone(),
            runs,
            stats,
        });
    }
    write_csv(
        &dir.join(SWEEP_SUMMARY),
        &[
            "variant",
            "timestep",
            "final_train_loss",
            "final_valid_loss",
            "tail_train_loss",
            "status",
        ],
        &summary,
    )?;
    write_manifest(&dir, cfg.seed)?;
    Ok(SweepReport { dir, variants })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(t: usize, losses: &[f64]) -> SweepRun {
        SweepRun {
            timestep: t,
            train_loss: losses.to_vec(),
            valid_loss: losses.iter().map(|x| x * 2.0).collect(),
            error: None,
        }
    }

    #[test]
    fn population_std() {
        assert_eq!(mean_std(&[2.0, 4.0]), (3.0, 1.0));
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
    }

    #[test]
    fn stats_skip_failed_runs() {
        let mut bad = run(7, &[9.0]);
        bad.error = Some("diverged".into());
        let s = epoch_stats(&[run(5, &[1.0, 2.0]), run(6, &[3.0, 4.0]), bad]);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].train_mean, s[0].train_std, s[0].runs), (2.0, 1.0, 2));
        assert_eq!((s[1].valid_mean, s[1].valid_std), (6.0, 2.0));
    }

    #[test]
    fn tail_mean() {
        let r = run(5, &(0..15).map(f64::from).collect::<Vec<_>>());
        assert_eq!(r.tail_train_loss(), Some(9.5));
        assert_eq!(run(5, &[1.0, 3.0]).tail_train_loss(), Some(2.0));
    }
}
