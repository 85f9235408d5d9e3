use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::error;
use nextframe::exec::set_single_threaded;
use nextframe::gradsuite::{convlstm_lstm_gap, model_checks, op_checks, EQUIVALENCE_TOLERANCE};
use nextframe_bench::{
    check_dir, output_dir, predict_from_checkpoint, run_experiment, timestep_sweep, BenchError,
    ExperimentConfig, OUT_DIR_ENV,
};

#[derive(Parser)]
#[command(name = "nextframe-bench", version, about = "Next-frame forecasting experiments")]
struct Cli {
    /// Force strict single-threaded, bitwise reproducible execution.
    #[arg(long, global = true)]
    single_thread: bool,
    /// Output directory, overriding the config.
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every variant of a config.
    Run { config: PathBuf },
    /// Retrain every variant across the config's timestep range.
    Sweep { config: PathBuf },
    /// Predict the next frame of a manifest with a saved checkpoint.
    Predict { checkpoint: PathBuf, manifest: PathBuf },
    /// Verify a run or sweep directory against its own artifacts.
    Check { dir: PathBuf },
    /// Run the finite-difference gradient suite.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.single_thread {
        set_single_threaded(true);
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg, &output_dir(&cfg, cli.out.as_deref()))?;
            for r in &report.results {
                match (&r.error, r.ssim) {
                    (None, Some(ssim)) => println!(
                        "{:<32} train {:.5} valid {:.5} ssim {:.4} time {:.1}s",
                        r.variant.name,
                        r.train_loss.unwrap_or(f64::NAN),
                        r.valid_loss.unwrap_or(f64::NAN),
                        ssim,
                        r.train_time_s
                    ),
                    (e, _) => println!("{:<32} FAILED {}", r.variant.name, e.as_deref().unwrap_or("")),
                }
            }
            println!("artifacts in {}", report.dir.display());
            match report.failures() {
                0 => Ok(()),
                failed => Err(BenchError::VariantsFailed {
                    failed,
                    total: report.results.len(),
                }),
            }
        }
        Command::Sweep { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = timestep_sweep(&cfg, &output_dir(&cfg, cli.out.as_deref()))?;
            for v in &report.variants {
                for run in &v.runs {
                    match run.tail_train_loss() {
                        Some(tail) => println!(
                            "{:<32} timestep {:>2} tail train loss {tail:.5}",
                            v.name, run.timestep
                        ),
                        None => println!("{:<32} timestep {:>2} FAILED", v.name, run.timestep),
                    }
                }
            }
            println!("artifacts in {}", report.dir.display());
            match report.failures() {
                0 => Ok(()),
                failed => Err(BenchError::VariantsFailed {
                    failed,
                    total: report.variants.iter().map(|v| v.runs.len()).sum(),
                }),
            }
        }
        Command::Predict {
            checkpoint,
            manifest,
        } => {
            let out = cli.out.unwrap_or_else(|| PathBuf::from("."));
            let (pgm, fct) = predict_from_checkpoint(&checkpoint, &manifest, &out)?;
            println!("{}\n{}", pgm.display(), fct.display());
            Ok(())
        }
        Command::Check { dir } => {
            let what = check_dir(&dir)?;
            println!("ok: {what}");
            Ok(())
        }
        Command::Gradcheck { instances, seed } => {
            let start = Instant::now();
            let mut outcomes = op_checks(instances, seed)?;
            let ops_s = start.elapsed().as_secs_f64();
            outcomes.extend(model_checks(instances, seed)?);
            let models_s = start.elapsed().as_secs_f64() - ops_s;
            let mut failed = 0;
            for o in &outcomes {
                println!(
                    "{} {:<24} {:>3} instances, worst relative error {:.3e} (tolerance {:.0e})",
                    if o.passed() { "PASS" } else { "FAIL" },
                    o.name,
                    o.instances,
                    o.worst,
                    o.tolerance
                );
                failed += usize::from(!o.passed());
            }
            println!("op checks {ops_s:.1}s, model checks {models_s:.1}s");
            let gap = convlstm_lstm_gap(50, seed)?;
            let ok = gap <= EQUIVALENCE_TOLERANCE;
            println!(
                "{} {:<24}  50 sets, max abs difference {gap:.3e} (tolerance {EQUIVALENCE_TOLERANCE:.0e})",
                if ok { "PASS" } else { "FAIL" },
                "convlstm 1x1 vs lstm"
            );
            failed += usize::from(!ok);
            match failed {
                0 => Ok(()),
                failed => Err(BenchError::VariantsFailed {
                    failed,
                    total: outcomes.len() + 1,
                }),
            }
        }
    }
}
