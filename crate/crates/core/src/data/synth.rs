//! Deterministic synthetic sequences for experiments without a real archive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::FrameSequence;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    /// A bright square on a dark background translating with constant
    /// velocity and toroidal wrap.
    MovingSquare,
    /// Seeded Gaussian blobs smoothed by one fixed 3×3 binomial step per
    /// frame (toroidal boundary).
    DiffusingBlob,
}

impl SynthKind {
    pub fn name(self) -> &'static str {
        match self {
            SynthKind::MovingSquare => "moving_square",
            SynthKind::DiffusingBlob => "diffusing_blob",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "moving_square" => Some(SynthKind::MovingSquare),
            "diffusing_blob" => Some(SynthKind::DiffusingBlob),
            _ => None,
        }
    }
}

/// Side of the moving square at a given resolution.
pub fn square_size(resolution: usize) -> usize {
    (resolution / 8).max(4)
}

/// Start corner (row, col) and per-frame velocity (drow, dcol) of the moving
/// square for a seed.
pub fn square_motion(resolution: usize, seed: u64) -> ((usize, usize), (i64, i64)) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = (rng.gen_range(0..resolution), rng.gen_range(0..resolution));
    let velocity = loop {
        let v = (rng.gen_range(-2i64..=2), rng.gen_range(-2i64..=2));
        if v != (0, 0) {
            break v;
        }
    };
    (start, velocity)
}

/// Top-left corner of the square in frame `t`.
pub fn square_corner(resolution: usize, seed: u64, t: usize) -> (usize, usize) {
    let ((r0, c0), (dr, dc)) = square_motion(resolution, seed);
    let n = resolution as i64;
    let wrap = |p: usize, v: i64| (p as i64 + v * t as i64).rem_euclid(n) as usize;
    (wrap(r0, dr), wrap(c0, dc))
}

pub fn synth_sequence<T: Scalar>(
    kind: SynthKind,
    n_frames: usize,
    resolution: usize,
    seed: u64,
) -> Result<FrameSequence<T>> {
    if n_frames == 0 {
        return Err(Error::invalid(
            "synthetic sequence needs at least one frame",
        ));
    }
    if resolution < square_size(resolution) || resolution < 4 {
        return Err(Error::invalid(format!(
            "resolution {resolution} is smaller than the {}-pixel square",
            square_size(resolution)
        )));
    }
    let frames = match kind {
        SynthKind::MovingSquare => moving_square(n_frames, resolution, seed),
        SynthKind::DiffusingBlob => diffusing_blob(n_frames, resolution, seed),
    };
    let frames = frames
        .into_iter()
        .map(|f| {
            Tensor::from_vec(
                &[resolution, resolution, 1],
                f.into_iter().map(T::from_f64).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, 1.0)
}

fn moving_square(n_frames: usize, res: usize, seed: u64) -> Vec<Vec<f64>> {
    let side = square_size(res);
    (0..n_frames)
        .map(|t| {
            let (r0, c0) = square_corner(res, seed, t);
            let mut f = vec![0.0; res * res];
            for dr in 0..side {
                for dc in 0..side {
                    f[((r0 + dr) % res) * res + (c0 + dc) % res] = 1.0;
                }
            }
            f
        })
        .collect()
}

fn diffusing_blob(n_frames: usize, res: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(0.0..res as f64),
                rng.gen_range(0.0..res as f64),
                rng.gen_range(0.05..0.15) * res as f64,
                rng.gen_range(0.5..1.0),
            )
        })
        .collect();
    let mut f = vec![0.0; res * res];
    for r in 0..res {
        for c in 0..res {
            let mut v = 0.0;
            for &(br, bc, sigma, amp) in &blobs {
                // Shortest toroidal distance.
                let d = |a: f64, b: f64| {
                    let d = (a - b).abs();
                    d.min(res as f64 - d)
                };
                let (dy, dx) = (d(r as f64, br), d(c as f64, bc));
                v += amp * (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
            }
            f[r * res + c] = v.min(1.0);
        }
    }
    let mut out = Vec::with_capacity(n_frames);
    out.push(f.clone());
    for _ in 1..n_frames {
        f = smooth(&f, res);
        out.push(f.clone());
    }
    out
}

fn smooth(f: &[f64], res: usize) -> Vec<f64> {
    const K: [f64; 3] = [0.25, 0.5, 0.25];
    let mut out = vec![0.0; f.len()];
    for r in 0..res {
        for c in 0..res {
            let mut v = 0.0;
            for (i, kr) in K.iter().enumerate() {
                for (j, kc) in K.iter().enumerate() {
                    let rr = (r + res + i - 1) % res;
                    let cc = (c + res + j - 1) % res;
                    v += kr * kc * f[rr * res + cc];
                }
            }
            out[r * res + c] = v;
        }
    }
    out
}
