use super::Mode;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_MOMENTUM: f64 = 0.99;

/// Per-channel batch normalization state. Running statistics follow
/// `running ← momentum·running + (1 − momentum)·batch`; the running variance
/// uses the unbiased batch variance.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub epsilon: T,
    pub momentum: T,
}

impl<T: Scalar> BatchNormParams<T> {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(BatchNormParams {
            gamma: Tensor::full(&[channels], T::one())?,
            beta: Tensor::zeros(&[channels])?,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::full(&[channels], T::one())?,
            epsilon: T::from_f64(DEFAULT_EPSILON),
            momentum: T::from_f64(DEFAULT_MOMENTUM),
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    dims: Vec<usize>,
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads<T> {
    pub dx: Tensor<T>,
    pub dgamma: Tensor<T>,
    pub dbeta: Tensor<T>,
}

/// (batch, channels, spatial) extents of an N×C×… tensor.
fn layout<T: Scalar>(x: &Tensor<T>, p: &BatchNormParams<T>) -> Result<(usize, usize, usize)> {
    if x.rank() < 2 || x.dims()[1] != p.channels() {
        return Err(Error::shape(format!(
            "batchnorm input {:?} does not have {} channels on axis 1",
            x.dims(),
            p.channels()
        )));
    }
    let n = x.dims()[0];
    let c = x.dims()[1];
    Ok((n, c, x.len() / (n * c)))
}

/// Normalizes an N×C×… tensor per channel. Train mode uses batch statistics
/// and updates the running ones; eval mode uses the running statistics.
/// The cache is only produced in train mode.
pub fn batchnorm<T: Scalar>(
    x: &Tensor<T>,
    p: &mut BatchNormParams<T>,
    mode: Mode,
) -> Result<(Tensor<T>, Option<BatchNormCache<T>>)> {
    match mode {
        Mode::Eval => Ok((batchnorm_inference(x, p)?, None)),
        Mode::Train => {
            let (n, c, s) = layout(x, p)?;
            let xd = x.data();
            let mut y = vec![T::zero(); x.len()];
            if n < 2 {
                return Err(Error::invalid(format!(
                    "train-mode batchnorm needs a batch of at least 2, got {n}"
                )));
            }
            let count = T::from_f64((n * s) as f64);
            let mut xhat = vec![T::zero(); x.len()];
            let mut inv_std = vec![T::zero(); c];
            #[allow(clippy::needless_range_loop)]
            for ch in 0..c {
                let mut sum = T::zero();
                for i in 0..n {
                    let base = (i * c + ch) * s;
                    sum += xd[base..base + s].iter().copied().sum::<T>();
                }
                let mean = sum / count;
                let mut sq = T::zero();
                for i in 0..n {
                    let base = (i * c + ch) * s;
                    sq += xd[base..base + s]
                        .iter()
                        .map(|&v| (v - mean) * (v - mean))
                        .sum::<T>();
                }
                let var = sq / count;
                let inv = T::one() / (var + p.epsilon).sqrt();
                inv_std[ch] = inv;
                let (g, b) = (p.gamma.data()[ch], p.beta.data()[ch]);
                for i in 0..n {
                    let base = (i * c + ch) * s;
                    for k in base..base + s {
                        let xh = (xd[k] - mean) * inv;
                        xhat[k] = xh;
                        y[k] = g * xh + b;
                    }
                }
                let unbiased = sq / (count - T::one());
                let mom = p.momentum;
                let rm = &mut p.running_mean.data_mut()[ch];
                *rm = mom * *rm + (T::one() - mom) * mean;
                let rv = &mut p.running_var.data_mut()[ch];
                *rv = mom * *rv + (T::one() - mom) * unbiased;
            }
            let cache = BatchNormCache {
                dims: x.dims().to_vec(),
                xhat,
                inv_std,
            };
            Ok((Tensor::from_parts(x.dims().to_vec(), y), Some(cache)))
        }
    }
}

/// Eval-mode normalization with the running statistics; never mutates.
pub fn batchnorm_inference<T: Scalar>(x: &Tensor<T>, p: &BatchNormParams<T>) -> Result<Tensor<T>> {
    let (n, c, s) = layout(x, p)?;
    let xd = x.data();
    let mut y = vec![T::zero(); x.len()];
    for ch in 0..c {
        let inv = T::one() / (p.running_var.data()[ch] + p.epsilon).sqrt();
        let (g, b, m) = (
            p.gamma.data()[ch],
            p.beta.data()[ch],
            p.running_mean.data()[ch],
        );
        for i in 0..n {
            let base = (i * c + ch) * s;
            for k in base..base + s {
                y[k] = g * (xd[k] - m) * inv + b;
            }
        }
    }
    Ok(Tensor::from_parts(x.dims().to_vec(), y))
}

/// Train-mode gradient, including the path through the batch statistics.
pub fn batchnorm_backward<T: Scalar>(
    p: &BatchNormParams<T>,
    cache: &BatchNormCache<T>,
    dy: &Tensor<T>,
) -> Result<BatchNormGrads<T>> {
    if dy.dims() != cache.dims.as_slice() {
        return Err(Error::shape(format!(
            "batchnorm upstream {:?} does not match cached input {:?}",
            dy.dims(),
            cache.dims
        )));
    }
    let (n, c, s) = layout(dy, p)?;
    let g = dy.data();
    let count = T::from_f64((n * s) as f64);
    let mut dx = vec![T::zero(); dy.len()];
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for ch in 0..c {
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for i in 0..n {
            let base = (i * c + ch) * s;
            for (&gk, &xk) in g[base..base + s].iter().zip(&cache.xhat[base..base + s]) {
                sum_g += gk;
                sum_gx += gk * xk;
            }
        }
        dgamma[ch] = sum_gx;
        dbeta[ch] = sum_g;
        let scale = p.gamma.data()[ch] * cache.inv_std[ch] / count;
        for i in 0..n {
            let base = (i * c + ch) * s;
            for k in base..base + s {
                dx[k] = scale * (count * g[k] - sum_g - cache.xhat[k] * sum_gx);
            }
        }
    }
    Ok(BatchNormGrads {
        dx: Tensor::from_parts(dy.dims().to_vec(), dx),
        dgamma: Tensor::from_parts(vec![c], dgamma),
        dbeta: Tensor::from_parts(vec![c], dbeta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn channel_stats(y: &Tensor<f64>, ch: usize) -> (f64, f64) {
        let (n, c) = (y.dims()[0], y.dims()[1]);
        let s = y.len() / (n * c);
        let vals: Vec<f64> = (0..n)
            .flat_map(|i| y.data()[(i * c + ch) * s..(i * c + ch + 1) * s].to_vec())
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
        (m, v)
    }

    #[test]
    fn train_output_is_standardized() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        // Spread of ±10 keeps the epsilon contribution to the variance below 1e-4.
        let x = Tensor::from_fn(&[8, 3, 2, 2], |_| rng.gen_range(-10.0..10.0)).unwrap();
        let mut p = BatchNormParams::<f64>::new(3).unwrap();
        let (y, cache) = batchnorm(&x, &mut p, Mode::Train).unwrap();
        assert!(cache.is_some());
        for ch in 0..3 {
            let (m, v) = channel_stats(&y, ch);
            assert!(m.abs() < 1e-5, "mean {m}");
            assert!((v - 1.0).abs() < 1e-4, "var {v}");
        }
        assert!(p.running_mean.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn constant_batch_maps_to_zero() {
        let x = Tensor::full(&[4, 2], 3.5).unwrap();
        let mut p = BatchNormParams::<f64>::new(2).unwrap();
        let (y, _) = batchnorm(&x, &mut p, Mode::Train).unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn neutral_eval_is_identity_up_to_epsilon() {
        let x = Tensor::from_fn(&[3, 2], |i| i as f64 - 2.0).unwrap();
        let mut p = BatchNormParams::<f64>::new(2).unwrap();
        let (y, cache) = batchnorm(&x, &mut p, Mode::Eval).unwrap();
        assert!(cache.is_none());
        let scale = 1.0 / (1.0f64 + 1e-3).sqrt();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b * scale).abs() < 1e-12);
            assert!((a - b).abs() < 2e-3);
        }
    }

    #[test]
    fn small_batch_rejected_in_train_mode() {
        let x = Tensor::zeros(&[1, 4]).unwrap();
        let mut p = BatchNormParams::<f64>::new(4).unwrap();
        assert!(batchnorm(&x, &mut p, Mode::Train).is_err());
        assert!(batchnorm(&x, &mut p, Mode::Eval).is_ok());
    }
}
