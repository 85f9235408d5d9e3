use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Glorot-uniform samples in ±sqrt(6 / (fan_in + fan_out)).
///
/// `dims[0]` is the output extent and `dims[1]` the input extent; any further
/// extents form the receptive field and multiply both fans.
pub fn glorot_init<T: Scalar, R: Rng>(dims: &[usize], rng: &mut R) -> Result<Tensor<T>> {
    if dims.len() < 2 {
        return Err(Error::invalid(format!(
            "glorot_init needs rank >= 2, got {dims:?}"
        )));
    }
    let field: usize = dims[2..].iter().product();
    let fan_out = dims[0] * field;
    let fan_in = dims[1] * field;
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(dims, |_| {
        let u: f64 = rng.gen();
        T::from_f64((2.0 * u - 1.0) * limit)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_within_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t: Tensor<f32> = glorot_init(&[100, 100], &mut rng).unwrap();
        let limit = (6.0f32 / 200.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn mean_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let t: Tensor<f64> = glorot_init(&[100, 100], &mut rng).unwrap();
        let mean = t.sum() / t.len() as f64;
        assert!(mean.abs() < 0.01, "{mean}");
    }

    #[test]
    fn deterministic_per_seed() {
        let a: Tensor<f32> = glorot_init(&[4, 3, 3, 3], &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b: Tensor<f32> = glorot_init(&[4, 3, 3, 3], &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let bound = (6.0f32 / ((4 + 3) * 9) as f32).sqrt();
        assert!(a.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn rank_one_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(glorot_init::<f32, _>(&[10], &mut rng).is_err());
    }
}
