use rand::Rng;

use super::Mode;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-element multipliers of a train-mode dropout pass: 0 for dropped
/// elements, 1/(1 − rate) for survivors.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask<T> {
    scale: Vec<T>,
}

/// Inverted dropout. Eval mode and `rate == 0` are exact identities and
/// return no mask.
pub fn dropout<T: Scalar, R: Rng>(
    x: &Tensor<T>,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor<T>, Option<DropoutMask<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let scale: Vec<T> = (0..x.len())
        .map(|_| {
            if rng.gen::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    let y = x.data().iter().zip(&scale).map(|(&v, &m)| v * m).collect();
    Ok((
        Tensor::from_parts(x.dims().to_vec(), y),
        Some(DropoutMask { scale }),
    ))
}

pub fn dropout_backward<T: Scalar>(
    mask: Option<&DropoutMask<T>>,
    dy: &Tensor<T>,
) -> Result<Tensor<T>> {
    match mask {
        None => Ok(dy.clone()),
        Some(m) => {
            if m.scale.len() != dy.len() {
                return Err(Error::shape(
                    "dropout mask does not match upstream gradient",
                ));
            }
            let d = dy
                .data()
                .iter()
                .zip(&m.scale)
                .map(|(&g, &s)| g * s)
                .collect();
            Ok(Tensor::from_parts(dy.dims().to_vec(), d))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::from_fn(&[4, 5], |i| i as f32 * 0.1 - 1.0).unwrap();
        for mode in [Mode::Train, Mode::Eval] {
            let (y, m) = dropout(&x, 0.0, mode, &mut rng).unwrap();
            assert_eq!(y, x);
            assert!(m.is_none());
        }
        let (y, _) = dropout(&x, 0.7, Mode::Eval, &mut rng).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn rate_one_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::<f32>::zeros(&[2]).unwrap();
        assert!(dropout(&x, 1.0, Mode::Train, &mut rng).is_err());
        assert!(dropout(&x, -0.1, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn expectation_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = Tensor::from_vec(&[4], vec![1.0f64, -2.0, 0.5, 3.0]).unwrap();
        let mut acc = [0.0; 4];
        let trials = 10_000;
        for _ in 0..trials {
            let (y, _) = dropout(&x, 0.5, Mode::Train, &mut rng).unwrap();
            for (a, v) in acc.iter_mut().zip(y.data()) {
                *a += v;
            }
        }
        for (a, &v) in acc.iter().zip(x.data()) {
            let mean = a / trials as f64;
            assert!((mean - v).abs() <= 0.02 * v.abs(), "{mean} vs {v}");
        }
    }

    #[test]
    fn backward_uses_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::full(&[100], 1.0f64).unwrap();
        let (y, m) = dropout(&x, 0.3, Mode::Train, &mut rng).unwrap();
        let d = dropout_backward(m.as_ref(), &x).unwrap();
        assert_eq!(d, y);
    }
}
