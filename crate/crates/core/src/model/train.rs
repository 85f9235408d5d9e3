use std::ops::Range;
use std::time::Instant;

use super::{Model, ModelConfig};
use crate::data::{FrameSequence, WindowedDataset};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::loss::{loss, loss_grad};
use crate::optim::{adam_step, AdamState};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    pub total_seconds: f64,
    pub config: ModelConfig,
}

/// Consecutive sample ranges of at most `size`. A trailing range of one
/// sample is folded into its predecessor because train-mode batchnorm
/// cannot normalize a single sample.
pub fn batch_ranges(n: usize, size: Option<usize>) -> Vec<Range<usize>> {
    let size = size.unwrap_or(n).clamp(1, n.max(1));
    let mut out: Vec<Range<usize>> = (0..n).step_by(size).map(|s| s..(s + size).min(n)).collect();
    if out.len() > 1 && out.last().is_some_and(|r| r.len() == 1) {
        let last = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").end = last.end;
    }
    out
}

fn check_data<T: Scalar>(m: &Model<T>, ds: &WindowedDataset<T>, what: &str) -> Result<()> {
    let cfg = m.config();
    if ds.is_empty() {
        return Err(Error::invalid(format!("{what} partition is empty")));
    }
    let r = cfg.resolution;
    if ds.x.dims()[1..] != [cfg.timestep, r, r, 1] {
        return Err(Error::shape(format!(
            "{what} windows {:?} do not match timestep {} at {r}x{r}",
            ds.x.dims(),
            cfg.timestep
        )));
    }
    Ok(())
}

/// Eval-mode predictions for every window of `ds`, computed in slices of
/// `chunk` windows.
pub fn predict_all<T: Scalar>(
    m: &Model<T>,
    ds: &WindowedDataset<T>,
    chunk: usize,
) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(ds.y.len());
    for r in batch_ranges(ds.len(), Some(chunk.max(1))) {
        let part = if r.len() == ds.len() {
            m.predict(&ds.x)?
        } else {
            m.predict(&ds.slice(r)?.x)?
        };
        data.extend_from_slice(part.data());
    }
    Tensor::from_vec(ds.y.dims(), data)
}

/// Trains for `m.config().epochs` epochs with Adam and returns per-epoch
/// train and validation losses. The training loss of an epoch is the
/// sample-weighted mean of its batch losses, measured in train mode.
pub fn fit<T: Scalar>(
    m: &mut Model<T>,
    train: &WindowedDataset<T>,
    valid: &WindowedDataset<T>,
) -> Result<TrainReport> {
    fit_with(m, train, valid, |_, _, _| {})
}

/// [`fit`] with a callback receiving `(epoch, train_loss, valid_loss)`.
pub fn fit_with<T, F>(
    m: &mut Model<T>,
    train: &WindowedDataset<T>,
    valid: &WindowedDataset<T>,
    mut on_epoch: F,
) -> Result<TrainReport>
where
    T: Scalar,
    F: FnMut(usize, f64, f64),
{
    check_data(m, train, "training")?;
    check_data(m, valid, "validation")?;
    let cfg = m.config().clone();
    let mut states = m
        .parameters()
        .iter()
        .map(|p| AdamState::new(p, cfg.adam))
        .collect::<Result<Vec<_>>>()?;
    let ranges = batch_ranges(train.len(), cfg.batch_size);
    let batches: Vec<WindowedDataset<T>> = if ranges.len() == 1 {
        vec![train.clone()]
    } else {
        ranges
            .iter()
            .map(|r| train.slice(r.clone()))
            .collect::<Result<_>>()?
    };
    let eval_chunk = cfg.batch_size.unwrap_or(valid.len());

    let mut report = TrainReport {
        train_loss: Vec::with_capacity(cfg.epochs),
        valid_loss: Vec::with_capacity(cfg.epochs),
        epoch_seconds: Vec::with_capacity(cfg.epochs),
        total_seconds: 0.0,
        config: cfg.clone(),
    };
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        m.set_mode(Mode::Train);
        let mut total = 0.0;
        for b in &batches {
            let (pred, tape) = m.train_step_forward(&b.x)?;
            let value = loss(cfg.loss, &pred, &b.y)?.as_f64();
            if !value.is_finite() {
                m.set_mode(Mode::Eval);
                return Err(Error::NonFinite {
                    what: "training loss",
                    epoch,
                });
            }
            total += value * b.len() as f64;
            let dy = loss_grad(cfg.loss, &pred, &b.y)?;
            let grads = m.backward(&tape, &dy)?;
            for ((p, g), s) in m
                .parameters_mut()
                .into_iter()
                .zip(&grads)
                .zip(states.iter_mut())
            {
                adam_step(p, g, s)?;
            }
        }
        m.set_mode(Mode::Eval);
        let train_loss = total / train.len() as f64;
        let pred = predict_all(m, valid, eval_chunk)?;
        let valid_loss = loss(cfg.loss, &pred, &valid.y)?.as_f64();
        if !valid_loss.is_finite() {
            return Err(Error::NonFinite {
                what: "validation loss",
                epoch,
            });
        }
        let secs = start.elapsed().as_secs_f64();
        report.train_loss.push(train_loss);
        report.valid_loss.push(valid_loss);
        report.epoch_seconds.push(secs);
        report.total_seconds += secs;
        on_epoch(epoch, train_loss, valid_loss);
    }
    Ok(report)
}

/// Predicts the frame following `window`, whose length must equal the
/// model's timestep. Identical to an eval-mode forward on the same frames.
pub fn predict_next<T: Scalar>(m: &Model<T>, window: &FrameSequence<T>) -> Result<Tensor<T>> {
    let t = m.config().timestep;
    if window.len() != t {
        return Err(Error::shape(format!(
            "window holds {} frames, model expects {t}",
            window.len()
        )));
    }
    let x = window.to_tensor();
    let mut dims = vec![1];
    dims.extend_from_slice(x.dims());
    let y = m.predict(&x.into_reshaped(&dims)?)?;
    let dims = y.dims()[1..].to_vec();
    y.into_reshaped(&dims)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_ranges_fold_singletons() {
        assert_eq!(batch_ranges(10, None), vec![0..10]);
        assert_eq!(batch_ranges(10, Some(4)), vec![0..4, 4..8, 8..10]);
        assert_eq!(batch_ranges(9, Some(4)), vec![0..4, 4..9]);
        assert_eq!(batch_ranges(3, Some(100)), vec![0..3]);
        assert_eq!(batch_ranges(1, Some(1)), vec![0..1]);
    }
}
