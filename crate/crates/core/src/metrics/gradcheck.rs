//! Central finite-difference gradient verification.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Denominator floor for near-zero gradients.
pub const REL_FLOOR: f64 = 1e-6;

/// Relative disagreement of two derivative estimates, floored at
/// [`REL_FLOOR`].
pub fn relative_error(numeric: f64, analytic: f64) -> f64 {
    (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences of `f` around `p`,
/// returning the largest relative error over all coordinates.
pub fn finite_diff_check<T, F>(
    f: F,
    p: &Tensor<T>,
    analytic: &Tensor<T>,
    step: f64,
) -> Result<f64>
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> T,
{
    let all: Vec<usize> = (0..p.len()).collect();
    finite_diff_check_at(f, p, analytic, step, &all)
}

/// [`finite_diff_check`] restricted to the flat indices in `coords`.
pub fn finite_diff_check_at<T, F>(
    mut f: F,
    p: &Tensor<T>,
    analytic: &Tensor<T>,
    step: f64,
    coords: &[usize],
) -> Result<f64>
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> T,
{
    if !(step > 0.0) {
        return Err(Error::invalid(format!(
            "finite-difference step {step} must be positive"
        )));
    }
    if p.dims() != analytic.dims() {
        return Err(Error::shape(format!(
            "analytic gradient {:?} does not match parameter {:?}",
            analytic.dims(),
            p.dims()
        )));
    }
    if let Some(&i) = coords.iter().find(|&&i| i >= p.len()) {
        return Err(Error::invalid(format!(
            "coordinate {i} outside a tensor of {} elements",
            p.len()
        )));
    }
    let mut probe = p.clone();
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = probe.data()[i];
        let h = T::from_f64(step);
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::invalid(format!(
                "objective is not finite when perturbing coordinate {i}"
            )));
        }
        let numeric = (up.as_f64() - down.as_f64()) / (2.0 * step);
        worst = worst.max(relative_error(numeric, analytic.data()[i].as_f64()));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let p = Tensor::<f64>::from_vec(&[1], vec![1.5]).unwrap();
        let g = Tensor::<f64>::from_vec(&[1], vec![3.0]).unwrap();
        let err = finite_diff_check(|w| w.data()[0] * w.data()[0], &p, &g, 1e-3).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn constant_function_zero_gradient() {
        let p = Tensor::<f64>::from_vec(&[3], vec![0.1, -2.0, 4.0]).unwrap();
        let err = finite_diff_check(|_| 7.0, &p, &p.zeros_like(), 1e-3).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn detects_wrong_gradient() {
        let p = Tensor::<f64>::from_vec(&[1], vec![1.5]).unwrap();
        let wrong = Tensor::<f64>::from_vec(&[1], vec![6.0]).unwrap();
        let err = finite_diff_check(|w| w.data()[0] * w.data()[0], &p, &wrong, 1e-3).unwrap();
        assert!((err - 0.5).abs() < 1e-6, "{err}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = Tensor::<f64>::from_vec(&[1], vec![0.0]).unwrap();
        assert!(finite_diff_check(|w| w.data()[0], &p, &p, 0.0).is_err());
        assert!(finite_diff_check(|_| f64::NAN, &p, &p, 1e-3).is_err());
        let q = Tensor::<f64>::zeros(&[2]).unwrap();
        assert!(finite_diff_check(|w| w.data()[0], &p, &q, 1e-3).is_err());
    }
}
