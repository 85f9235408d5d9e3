//! Training losses over whole tensors: RMSE and MAE.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    Mae,
    Rmse,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mae => "mae",
            LossKind::Rmse => "rmse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mae" => Some(LossKind::Mae),
            "rmse" => Some(LossKind::Rmse),
            _ => None,
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// RMSE values below this get a zero gradient.
pub const RMSE_GRAD_FLOOR: f64 = 1e-12;

fn check<T: Scalar>(p: &Tensor<T>, o: &Tensor<T>) -> Result<()> {
    if p.dims() != o.dims() {
        return Err(Error::shape(format!(
            "prediction {:?} vs observation {:?}",
            p.dims(),
            o.dims()
        )));
    }
    if p.is_empty() {
        return Err(Error::invalid("loss of empty tensors"));
    }
    Ok(())
}

/// Accumulates in `f64` regardless of `T`.
pub fn loss<T: Scalar>(kind: LossKind, p: &Tensor<T>, o: &Tensor<T>) -> Result<T> {
    check(p, o)?;
    let n = p.len() as f64;
    let pairs = p
        .data()
        .iter()
        .zip(o.data())
        .map(|(&a, &b)| (a - b).as_f64());
    let v = match kind {
        LossKind::Mae => pairs.map(f64::abs).sum::<f64>() / n,
        LossKind::Rmse => (pairs.map(|d| d * d).sum::<f64>() / n).sqrt(),
    };
    Ok(T::from_f64(v))
}

/// Gradient of [`loss`] with respect to `p`. MAE uses sign(0) = 0; RMSE
/// returns zeros once the loss falls below [`RMSE_GRAD_FLOOR`].
pub fn loss_grad<T: Scalar>(kind: LossKind, p: &Tensor<T>, o: &Tensor<T>) -> Result<Tensor<T>> {
    check(p, o)?;
    let n = p.len() as f64;
    let data: Vec<T> = match kind {
        LossKind::Mae => {
            let inv = T::from_f64(1.0 / n);
            p.data()
                .iter()
                .zip(o.data())
                .map(|(&a, &b)| {
                    let d = a - b;
                    if d > T::zero() {
                        inv
                    } else if d < T::zero() {
                        -inv
                    } else {
                        T::zero()
                    }
                })
                .collect()
        }
        LossKind::Rmse => {
            let r = loss(kind, p, o)?.as_f64();
            if r < RMSE_GRAD_FLOOR {
                vec![T::zero(); p.len()]
            } else {
                let k = T::from_f64(1.0 / (n * r));
                p.data()
                    .iter()
                    .zip(o.data())
                    .map(|(&a, &b)| (a - b) * k)
                    .collect()
            }
        }
    };
    Ok(Tensor::from_parts(p.dims().to_vec(), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn hand_values() {
        let (p, o) = (t(&[1.0, 0.0]), t(&[0.0, 0.0]));
        assert_eq!(loss(LossKind::Mae, &p, &o).unwrap(), 0.5);
        assert!((loss(LossKind::Rmse, &p, &o).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        let g = loss_grad(LossKind::Rmse, &p, &o).unwrap();
        assert!((g.data()[0] - 1.0 / (2.0 * 0.5f64.sqrt())).abs() < 1e-12);
        assert_eq!(g.data()[1], 0.0);
    }

    #[test]
    fn perfect_fit() {
        let p = t(&[0.25, 0.5, 1.0]);
        for kind in [LossKind::Mae, LossKind::Rmse] {
            assert_eq!(loss(kind, &p, &p).unwrap(), 0.0);
            assert!(loss_grad(kind, &p, &p)
                .unwrap()
                .data()
                .iter()
                .all(|&v| v == 0.0));
        }
    }

    #[test]
    fn errors() {
        assert!(loss(LossKind::Mae, &t(&[1.0]), &t(&[1.0, 2.0])).is_err());
        assert!(loss_grad(LossKind::Rmse, &t(&[1.0]), &t(&[1.0, 2.0])).is_err());
    }
}
