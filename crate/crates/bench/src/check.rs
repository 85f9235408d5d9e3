//! Internal-consistency verification of emitted run and sweep directories.

use std::fs;
use std::path::Path;

use nextframe::data::pnm::encode_pgm;
use nextframe::loss::loss;
use nextframe::metrics::evaluate;
use nextframe::model::read_checkpoint_config;
use nextframe::tensor::read_tensor_file;
use nextframe::Tensor;

use crate::artifacts::{num, read_csv, verify_manifest};
use crate::error::{BenchError, Result};
use crate::run::{
    frames_of, CHECKPOINT_DIR, CURVE_FILE, CURVE_HEADER, ERROR_FILE, FRAMES_FILE, PRED_FCT,
    PRED_PGM, SUMMARY_FILE, SUMMARY_HEADER, TIMINGS_FILE, TRUTH_FCT, TRUTH_PGM,
};
use crate::sweep::{curve_file, epoch_stats, SweepRun, STATS_FILE, STATS_HEADER, SWEEP_SUMMARY};

/// Checks a run or sweep directory and returns what was verified. Any
/// disagreement is an [`BenchError::Inconsistent`] error listing every
/// problem found.
pub fn check_dir(dir: &Path) -> Result<String> {
    let mut problems = verify_manifest(dir)?;
    let what = if dir.join(SUMMARY_FILE).is_file() {
        let n = check_run(dir, &mut problems)?;
        format!("run with {n} variant(s)")
    } else if dir.join(SWEEP_SUMMARY).is_file() {
        let n = check_sweep(dir, &mut problems)?;
        format!("sweep with {n} run(s)")
    } else {
        return Err(BenchError::Inconsistent(vec![format!(
            "{} holds neither {SUMMARY_FILE} nor {SWEEP_SUMMARY}",
            dir.display()
        )]));
    };
    if problems.is_empty() {
        Ok(what)
    } else {
        Err(BenchError::Inconsistent(problems))
    }
}

fn parse_f64(s: &str, ctx: &str, problems: &mut Vec<String>) -> Option<f64> {
    match s.parse() {
        Ok(v) => Some(v),
        Err(_) => {
            problems.push(format!("{ctx}: {s:?} is not a number"));
            None
        }
    }
}

fn expect_eq(ctx: &str, recomputed: f64, reported: f64, problems: &mut Vec<String>) {
    if recomputed.to_bits() != reported.to_bits() {
        problems.push(format!(
            "{ctx}: reported {} but recomputed {}",
            num(reported),
            num(recomputed)
        ));
    }
}

fn check_run(dir: &Path, problems: &mut Vec<String>) -> Result<usize> {
    let (header, rows) = read_csv(&dir.join(SUMMARY_FILE))?;
    if header != SUMMARY_HEADER {
        problems.push(format!("{SUMMARY_FILE} header is {header:?}"));
        return Ok(rows.len());
    }
    let (_, timings) = read_csv(&dir.join(TIMINGS_FILE))?;
    let timed: Vec<&str> = timings.iter().map(|r| r[0].as_str()).collect();
    let named: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    if timed != named {
        problems.push(format!("{TIMINGS_FILE} variants {timed:?} differ from the summary"));
    }
    for row in &rows {
        let name = &row[0];
        let vdir = dir.join(name);
        if row[8] != "ok" {
            if !vdir.join(ERROR_FILE).is_file() {
                problems.push(format!("{name}: failed without {ERROR_FILE}"));
            }
            continue;
        }
        check_variant(&vdir, name, row, problems)?;
    }
    Ok(rows.len())
}

fn check_variant(vdir: &Path, name: &str, row: &[String], problems: &mut Vec<String>) -> Result<()> {
    let cfg = read_checkpoint_config(&vdir.join(CHECKPOINT_DIR))?;
    let echo = [
        cfg.architecture.to_string(),
        cfg.resolution.to_string(),
        cfg.loss.to_string(),
        cfg.timestep.to_string(),
    ];
    if row[1..5] != echo {
        problems.push(format!(
            "{name}: summary says {:?}, checkpoint config says {echo:?}",
            &row[1..5]
        ));
    }

    let (header, curve) = read_csv(&vdir.join(CURVE_FILE))?;
    if header != CURVE_HEADER {
        problems.push(format!("{name}: {CURVE_FILE} header is {header:?}"));
        return Ok(());
    }
    if curve.len() != cfg.epochs {
        problems.push(format!(
            "{name}: {} curve rows for {} epochs",
            curve.len(),
            cfg.epochs
        ));
    }
    for (i, r) in curve.iter().enumerate() {
        if r[0] != i.to_string() {
            problems.push(format!("{name}: curve row {i} is labelled epoch {}", r[0]));
        }
    }
    let Some(last) = curve.last() else {
        return Ok(());
    };
    let ctx = format!("{name} {CURVE_FILE}");
    let (Some(ct), Some(cv)) = (
        parse_f64(&last[1], &ctx, problems),
        parse_f64(&last[2], &ctx, problems),
    ) else {
        return Ok(());
    };
    let ctx = format!("{name} {SUMMARY_FILE}");
    let (Some(st), Some(sv), Some(ss)) = (
        parse_f64(&row[5], &ctx, problems),
        parse_f64(&row[6], &ctx, problems),
        parse_f64(&row[7], &ctx, problems),
    ) else {
        return Ok(());
    };
    expect_eq(&format!("{name}: train_loss"), ct, st, problems);
    expect_eq(&format!("{name}: valid_loss"), cv, sv, problems);

    let pred: Tensor<f32> = read_tensor_file(vdir.join(PRED_FCT))?;
    let truth: Tensor<f32> = read_tensor_file(vdir.join(TRUTH_FCT))?;
    if pred.dims() != truth.dims() || pred.rank() != 4 || pred.dims()[0] == 0 {
        problems.push(format!(
            "{name}: prediction dims {:?} vs truth {:?}",
            pred.dims(),
            truth.dims()
        ));
        return Ok(());
    }
    let recomputed = loss(cfg.loss, &pred, &truth)?;
    expect_eq(
        &format!("{name}: valid_loss from predictions"),
        f64::from(recomputed),
        sv,
        problems,
    );
    let pf = frames_of(&pred)?;
    let tf = frames_of(&truth)?;
    let eval = evaluate(&pf, &tf)?;
    expect_eq(&format!("{name}: ssim"), eval.ssim, ss, problems);

    let mut csv = Vec::new();
    eval.write_csv(&mut csv)
        .map_err(|e| BenchError::io(vdir.join(FRAMES_FILE), e))?;
    let on_disk = fs::read(vdir.join(FRAMES_FILE)).map_err(|e| BenchError::io(vdir.join(FRAMES_FILE), e))?;
    if on_disk != csv {
        problems.push(format!("{name}: {FRAMES_FILE} differs from recomputed scores"));
    }
    for (file, frame) in [(PRED_PGM, pf.last()), (TRUTH_PGM, tf.last())] {
        let frame = frame.expect("at least one frame");
        let path = vdir.join(file);
        let bytes = fs::read(&path).map_err(|e| BenchError::io(&path, e))?;
        if bytes != encode_pgm(frame)? {
            problems.push(format!("{name}: {file} does not encode the last frame"));
        }
    }
    Ok(())
}

fn check_sweep(dir: &Path, problems: &mut Vec<String>) -> Result<usize> {
    let (_, rows) = read_csv(&dir.join(SWEEP_SUMMARY))?;
    let mut names: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    names.dedup();
    for name in names {
        let vdir = dir.join(name);
        let mut runs = Vec::new();
        for row in rows.iter().filter(|r| r[0] == name) {
            let t: usize = match row[1].parse() {
                Ok(t) => t,
                Err(_) => {
                    problems.push(format!("{name}: bad timestep {:?}", row[1]));
                    continue;
                }
            };
            let (_, curve) = read_csv(&vdir.join(curve_file(t)))?;
            let ctx = format!("{name} {}", curve_file(t));
            let mut run = SweepRun {
                timestep: t,
                train_loss: Vec::new(),
                valid_loss: Vec::new(),
                error: (row[5] != "ok").then(|| row[5].clone()),
            };
            for r in &curve {
                if let (Some(a), Some(b)) = (
                    parse_f64(&r[1], &ctx, problems),
                    parse_f64(&r[2], &ctx, problems),
                ) {
                    run.train_loss.push(a);
                    run.valid_loss.push(b);
                }
            }
            if run.error.is_none() {
                let last = run.train_loss.last().copied();
                match (last, row[2].parse::<f64>()) {
                    (Some(l), Ok(s)) => expect_eq(&format!("{ctx} final_train_loss"), l, s, problems),
                    _ => problems.push(format!("{ctx}: missing final train loss")),
                }
                if let (Some(tail), Ok(s)) = (run.tail_train_loss(), row[4].parse::<f64>()) {
                    expect_eq(&format!("{ctx} tail_train_loss"), tail, s, problems);
                }
            }
            runs.push(run);
        }
        let (header, stats) = read_csv(&vdir.join(STATS_FILE))?;
        if header != STATS_HEADER {
            problems.push(format!("{name}: {STATS_FILE} header is {header:?}"));
            continue;
        }
        let expected = epoch_stats(&runs);
        if expected.len() != stats.len() {
            problems.push(format!(
                "{name}: {} stats rows, expected {}",
                stats.len(),
                expected.len()
            ));
            continue;
        }
        for (i, (e, r)) in expected.iter().zip(&stats).enumerate() {
            let want = [
                i.to_string(),
                num(e.train_mean),
                num(e.train_std),
                num(e.valid_mean),
                num(e.valid_std),
                e.runs.to_string(),
            ];
            if r[..] != want {
                problems.push(format!("{name}: {STATS_FILE} row {i} is {r:?}, expected {want:?}"));
            }
        }
    }
    Ok(rows.len())
}
