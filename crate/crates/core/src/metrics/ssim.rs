//! Structural similarity.
//!
//! The default form uses whole-frame statistics:
//!
//! ```text
//! SSIM(x, y) = (2μxμy + c1)(2σxy + c2) / ((μx² + μy² + c1)(σx² + σy² + c2))
//! ```
//!
//! with population (1/n) variances and covariance. [`ssim_windowed`] averages
//! the same expression over every 8×8 window, for comparison with image
//! toolkits.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimConsts {
    pub c1: f64,
    pub c2: f64,
}

impl SsimConsts {
    pub const K1: f64 = 0.01;
    pub const K2: f64 = 0.03;

    /// Constants for values with dynamic range `l`.
    pub fn for_range(l: f64) -> Self {
        SsimConsts {
            c1: (Self::K1 * l).powi(2),
            c2: (Self::K2 * l).powi(2),
        }
    }
}

impl Default for SsimConsts {
    fn default() -> Self {
        Self::for_range(1.0)
    }
}

pub const WINDOW: usize = 8;

fn formula(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64, k: SsimConsts) -> f64 {
    ((2.0 * mx * my + k.c1) * (2.0 * cxy + k.c2)) / ((mx * mx + my * my + k.c1) * (vx + vy + k.c2))
}

pub fn ssim<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>, consts: SsimConsts) -> Result<f64> {
    if x.dims() != y.dims() {
        return Err(Error::shape(format!(
            "ssim of {:?} and {:?}",
            x.dims(),
            y.dims()
        )));
    }
    let n = x.len() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (&a, &b) in x.data().iter().zip(y.data()) {
        sx += a.as_f64();
        sy += b.as_f64();
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.data().iter().zip(y.data()) {
        let (dx, dy) = (a.as_f64() - mx, b.as_f64() - my);
        vx += dx * dx;
        vy += dy * dy;
        cxy += dx * dy;
    }
    Ok(formula(mx, my, vx / n, vy / n, cxy / n, consts))
}

/// Mean SSIM over all 8×8 windows at stride 1 with uniform weights. Frames
/// are read as H×W(×1); frames smaller than the window use a single window
/// covering the whole frame.
pub fn ssim_windowed<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>, consts: SsimConsts) -> Result<f64> {
    if x.dims() != y.dims() {
        return Err(Error::shape(format!(
            "ssim of {:?} and {:?}",
            x.dims(),
            y.dims()
        )));
    }
    if x.rank() < 2 || x.dims()[2..].iter().product::<usize>() != 1 {
        return Err(Error::shape(format!(
            "windowed ssim needs single-channel H×W frames, got {:?}",
            x.dims()
        )));
    }
    let (h, w) = (x.dims()[0], x.dims()[1]);
    let (wh, ww) = (WINDOW.min(h), WINDOW.min(w));
    let n = (wh * ww) as f64;
    let (xd, yd) = (x.data(), y.data());
    let mut total = 0.0;
    let mut count = 0usize;
    for top in 0..=h - wh {
        for left in 0..=w - ww {
            let (mut sx, mut sy) = (0.0, 0.0);
            for r in top..top + wh {
                for c in left..left + ww {
                    sx += xd[r * w + c].as_f64();
                    sy += yd[r * w + c].as_f64();
                }
            }
            let (mx, my) = (sx / n, sy / n);
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for r in top..top + wh {
                for c in left..left + ww {
                    let dx = xd[r * w + c].as_f64() - mx;
                    let dy = yd[r * w + c].as_f64() - my;
                    vx += dx * dx;
                    vy += dy * dy;
                    cxy += dx * dy;
                }
            }
            total += formula(mx, my, vx / n, vy / n, cxy / n, consts);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(f: impl Fn(usize) -> f64) -> Tensor<f64> {
        Tensor::from_fn(&[8, 8, 1], f).unwrap()
    }

    #[test]
    fn identical_frames_score_one() {
        let x = frame(|i| ((i * 13) % 17) as f64 / 17.0);
        assert_eq!(ssim(&x, &x, SsimConsts::default()).unwrap(), 1.0);
        assert!((ssim_windowed(&x, &x, SsimConsts::default()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_and_bounded() {
        let x = frame(|i| ((i * 13) % 17) as f64 / 17.0);
        let y = frame(|i| 1.0 - ((i * 13) % 17) as f64 / 17.0);
        let k = SsimConsts::default();
        let a = ssim(&x, &y, k).unwrap();
        assert_eq!(a, ssim(&y, &x, k).unwrap());
        assert!((-1.0..0.0).contains(&a), "anticorrelated frames: {a}");
    }

    #[test]
    fn dims_mismatch() {
        let x = Tensor::<f64>::zeros(&[4, 4, 1]).unwrap();
        let y = Tensor::<f64>::zeros(&[4, 5, 1]).unwrap();
        assert!(ssim(&x, &y, SsimConsts::default()).is_err());
    }

    #[test]
    fn default_constants() {
        let k = SsimConsts::default();
        assert!((k.c1 - 1e-4).abs() < 1e-18);
        assert!((k.c2 - 9e-4).abs() < 1e-18);
    }
}
