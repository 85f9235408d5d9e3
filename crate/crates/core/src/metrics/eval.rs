use std::io::Write;

use super::ssim::{ssim, SsimConsts};
use crate::error::{Error, Result};
use crate::loss::{loss, LossKind};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameScore {
    pub index: usize,
    pub rmse: f64,
    pub mae: f64,
    pub ssim: f64,
}

/// Per-frame scores and their aggregates. `rmse` aggregates as the root of
/// the mean squared per-frame RMSE, which equals the RMSE over all pixels of
/// equally sized frames; `mae` and `ssim` are plain means.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rmse: f64,
    pub mae: f64,
    pub ssim: f64,
    pub frames: Vec<FrameScore>,
}

/// Sums after sorting so the result does not depend on input order.
fn order_free_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn evaluate<T: Scalar>(pred: &[Tensor<T>], truth: &[Tensor<T>]) -> Result<EvalReport> {
    evaluate_with(pred, truth, SsimConsts::default())
}

pub fn evaluate_with<T: Scalar>(
    pred: &[Tensor<T>],
    truth: &[Tensor<T>],
    consts: SsimConsts,
) -> Result<EvalReport> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} ground-truth frames",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let frames = pred
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(index, (p, o))| {
            Ok(FrameScore {
                index,
                rmse: loss(LossKind::Rmse, p, o)?.as_f64(),
                mae: loss(LossKind::Mae, p, o)?.as_f64(),
                ssim: ssim(p, o, consts)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rmse = order_free_mean(frames.iter().map(|f| f.rmse * f.rmse).collect()).sqrt();
    let mae = order_free_mean(frames.iter().map(|f| f.mae).collect());
    let ssim = order_free_mean(frames.iter().map(|f| f.ssim).collect());
    Ok(EvalReport {
        rmse,
        mae,
        ssim,
        frames,
    })
}

impl EvalReport {
    /// One row per frame followed by an `all` row with the aggregates.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "frame_index,rmse,mae,ssim")?;
        for f in &self.frames {
            writeln!(w, "{},{:?},{:?},{:?}", f.index, f.rmse, f.mae, f.ssim)?;
        }
        writeln!(w, "all,{:?},{:?},{:?}", self.rmse, self.mae, self.ssim)?;
        Ok(())
    }
}
