use std::ops::Range;

use super::FrameSequence;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Supervised pairs built by sliding a window over a sequence: `x` is
/// samples×timestep×H×W×1, `y` is samples×H×W×1. Sample `i` reads frames
/// `i..i+timestep` and targets frame `i+timestep`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset<T> {
    pub x: Tensor<T>,
    pub y: Tensor<T>,
    pub timestep: usize,
}

impl<T: Scalar> WindowedDataset<T> {
    pub fn len(&self) -> usize {
        self.x.dims()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Frame extent (H, W).
    pub fn frame_dims(&self) -> (usize, usize) {
        (self.y.dims()[1], self.y.dims()[2])
    }

    pub fn sample(&self, i: usize) -> Result<(Tensor<T>, Tensor<T>)> {
        Ok((self.x.outer(i)?, self.y.outer(i)?))
    }

    /// Samples in `range`, order preserved.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::invalid(format!(
                "sample range {range:?} invalid for {} samples",
                self.len()
            )));
        }
        let xs = self.x.len() / self.len();
        let ys = self.y.len() / self.len();
        let mut xd = self.x.dims().to_vec();
        let mut yd = self.y.dims().to_vec();
        xd[0] = range.len();
        yd[0] = range.len();
        Ok(WindowedDataset {
            x: Tensor::from_vec(
                &xd,
                self.x.data()[range.start * xs..range.end * xs].to_vec(),
            )?,
            y: Tensor::from_vec(
                &yd,
                self.y.data()[range.start * ys..range.end * ys].to_vec(),
            )?,
            timestep: self.timestep,
        })
    }

    /// Appends `other`'s samples after `self`'s.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.x.dims()[1..] != other.x.dims()[1..] || self.timestep != other.timestep {
            return Err(Error::shape("datasets differ in window shape"));
        }
        let mut xd = self.x.dims().to_vec();
        let mut yd = self.y.dims().to_vec();
        xd[0] += other.len();
        yd[0] += other.len();
        let mut x = self.x.data().to_vec();
        x.extend_from_slice(other.x.data());
        let mut y = self.y.data().to_vec();
        y.extend_from_slice(other.y.data());
        Ok(WindowedDataset {
            x: Tensor::from_vec(&xd, x)?,
            y: Tensor::from_vec(&yd, y)?,
            timestep: self.timestep,
        })
    }
}

pub fn make_windows<T: Scalar>(
    seq: &FrameSequence<T>,
    timestep: usize,
) -> Result<WindowedDataset<T>> {
    if timestep == 0 {
        return Err(Error::invalid("timestep must be positive"));
    }
    if seq.channels() != 1 {
        return Err(Error::shape(format!(
            "windowing expects single-channel frames, got {} channels",
            seq.channels()
        )));
    }
    let n = seq.len();
    if n <= timestep {
        return Err(Error::invalid(format!(
            "{n} frames cannot form a window of {timestep} plus a target"
        )));
    }
    let samples = n - timestep;
    let (h, w) = (seq.height(), seq.width());
    let mut x = Vec::with_capacity(samples * timestep * h * w);
    let mut y = Vec::with_capacity(samples * h * w);
    for i in 0..samples {
        for j in 0..timestep {
            x.extend_from_slice(seq.frame(i + j).data());
        }
        y.extend_from_slice(seq.frame(i + timestep).data());
    }
    Ok(WindowedDataset {
        x: Tensor::from_vec(&[samples, timestep, h, w, 1], x)?,
        y: Tensor::from_vec(&[samples, h, w, 1], y)?,
        timestep,
    })
}

/// Chronological split: the first ⌊fraction·samples⌋ samples train, the rest
/// validate. No shuffling.
pub fn chrono_split<T: Scalar>(
    ds: &WindowedDataset<T>,
    train_fraction: f64,
) -> Result<(WindowedDataset<T>, WindowedDataset<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let n = ds.len();
    // The small offset keeps products like 0.7 * 10 from landing just below
    // an integer.
    let cut = (train_fraction * n as f64 + 1e-9).floor() as usize;
    if cut == 0 || cut >= n {
        return Err(Error::invalid(format!(
            "fraction {train_fraction} of {n} samples leaves an empty partition"
        )));
    }
    Ok((ds.slice(0..cut)?, ds.slice(cut..n)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(n: usize) -> FrameSequence<f32> {
        let frames = (0..n)
            .map(|i| Tensor::full(&[2, 2, 1], i as f32).unwrap())
            .collect();
        FrameSequence::new(frames, 1.0).unwrap()
    }

    #[test]
    fn first_sample_layout() {
        let ds = make_windows(&seq(10), 5).unwrap();
        let (x, y) = ds.sample(0).unwrap();
        for j in 0..5 {
            assert!(x.outer(j).unwrap().data().iter().all(|&v| v == j as f32));
        }
        assert!(y.data().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn sample_count() {
        assert_eq!(make_windows(&seq(158), 5).unwrap().len(), 153);
        assert!(make_windows(&seq(5), 5).is_err());
        assert!(make_windows(&seq(5), 0).is_err());
    }

    #[test]
    fn split_proportions() {
        let ds = make_windows(&seq(105), 5).unwrap();
        let (tr, va) = chrono_split(&ds, 0.8).unwrap();
        assert_eq!((tr.len(), va.len()), (80, 20));
        assert_eq!(tr.y.data().last(), Some(&84.0));
        assert_eq!(va.y.data().first(), Some(&85.0));
        assert_eq!(tr.concat(&va).unwrap(), ds);

        let ds = make_windows(&seq(15), 5).unwrap();
        let (tr, va) = chrono_split(&ds, 0.5).unwrap();
        assert_eq!((tr.len(), va.len()), (5, 5));

        let ds = make_windows(&seq(7), 5).unwrap();
        let (tr, va) = chrono_split(&ds, 0.99).unwrap();
        assert_eq!((tr.len(), va.len()), (1, 1));
        assert!(chrono_split(&ds, 0.4).is_err());
        assert!(chrono_split(&ds, 1.0).is_err());
    }
}
