use rand::Rng;

use super::{glorot_init, Activation};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::kernels::{gemm_acc, gemm_nt_acc, gemm_tn_acc};
use crate::tensor::Tensor;

/// `y = activation(x Wᵀ + b)` applied to the last axis; `w` is out×in.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseParams<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
    pub activation: Activation,
}

impl<T: Scalar> DenseParams<T> {
    pub fn init<R: Rng>(
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(DenseParams {
            w: glorot_init(&[output, input], rng)?,
            b: Tensor::zeros(&[output])?,
            activation,
        })
    }

    pub fn input(&self) -> usize {
        self.w.dims()[1]
    }

    pub fn output(&self) -> usize {
        self.w.dims()[0]
    }
}

#[derive(Clone, Debug)]
pub struct DenseCache<T> {
    x: Tensor<T>,
    y: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct DenseGrads<T> {
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
    pub dx: Tensor<T>,
}

fn rows_of<T: Scalar>(x: &Tensor<T>, p: &DenseParams<T>) -> Result<usize> {
    if p.w.rank() != 2 || p.b.dims() != [p.output()] {
        return Err(Error::shape(format!(
            "dense weights {:?} and bias {:?} are inconsistent",
            p.w.dims(),
            p.b.dims()
        )));
    }
    if x.dims().last() != Some(&p.input()) {
        return Err(Error::shape(format!(
            "dense input {:?} does not end in {}",
            x.dims(),
            p.input()
        )));
    }
    Ok(x.len() / p.input())
}

pub fn dense<T: Scalar>(x: &Tensor<T>, p: &DenseParams<T>) -> Result<Tensor<T>> {
    let rows = rows_of(x, p)?;
    let (n_in, n_out) = (p.input(), p.output());
    let mut y = Vec::with_capacity(rows * n_out);
    for _ in 0..rows {
        y.extend_from_slice(p.b.data());
    }
    gemm_nt_acc(x.data(), p.w.data(), &mut y, rows, n_in, n_out);
    if p.activation != Activation::None {
        y.iter_mut().for_each(|v| *v = p.activation.apply(*v));
    }
    let mut dims = x.dims().to_vec();
    *dims.last_mut().expect("rank >= 1") = n_out;
    Ok(Tensor::from_parts(dims, y))
}

pub fn dense_forward<T: Scalar>(
    x: &Tensor<T>,
    p: &DenseParams<T>,
) -> Result<(Tensor<T>, DenseCache<T>)> {
    let y = dense(x, p)?;
    Ok((y.clone(), DenseCache { x: x.clone(), y }))
}

pub fn dense_backward<T: Scalar>(
    p: &DenseParams<T>,
    cache: &DenseCache<T>,
    dy: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    if dy.dims() != cache.y.dims() {
        return Err(Error::shape(format!(
            "dense upstream {:?} does not match output {:?}",
            dy.dims(),
            cache.y.dims()
        )));
    }
    let rows = rows_of(&cache.x, p)?;
    let (n_in, n_out) = (p.input(), p.output());
    let dz: Vec<T> = dy
        .data()
        .iter()
        .zip(cache.y.data())
        .map(|(&g, &y)| g * p.activation.derivative_from_output(y))
        .collect();
    let mut dw = vec![T::zero(); n_out * n_in];
    gemm_tn_acc(&dz, cache.x.data(), &mut dw, rows, n_out, n_in);
    let mut db = vec![T::zero(); n_out];
    for row in dz.chunks_exact(n_out) {
        for (d, &v) in db.iter_mut().zip(row) {
            *d += v;
        }
    }
    let mut dx = vec![T::zero(); rows * n_in];
    gemm_acc(&dz, p.w.data(), &mut dx, rows, n_out, n_in);
    Ok(DenseGrads {
        dw: Tensor::from_parts(vec![n_out, n_in], dw),
        db: Tensor::from_parts(vec![n_out], db),
        dx: Tensor::from_parts(cache.x.dims().to_vec(), dx),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(w: Vec<f64>, out: usize, inp: usize) -> DenseParams<f64> {
        DenseParams {
            w: Tensor::from_vec(&[out, inp], w).unwrap(),
            b: Tensor::zeros(&[out]).unwrap(),
            activation: Activation::None,
        }
    }

    #[test]
    fn identity_weights() {
        let p = params(vec![1.0, 0.0, 0.0, 1.0], 2, 2);
        let x = Tensor::from_vec(&[3, 2], vec![1.0, -2.0, 0.5, 4.0, 3.0, 3.0]).unwrap();
        assert_eq!(dense(&x, &p).unwrap(), x);
    }

    #[test]
    fn hand_product() {
        let p = params(vec![1.0, 1.0, 0.0, 1.0], 2, 2);
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        assert_eq!(dense(&x, &p).unwrap().data(), &[3.0, 2.0]);
    }

    #[test]
    fn mismatch_rejected() {
        let p = params(vec![1.0, 1.0, 0.0, 1.0], 2, 2);
        let x = Tensor::zeros(&[1, 3]).unwrap();
        assert!(dense(&x, &p).is_err());
    }

    #[test]
    fn leading_axes_are_rows() {
        let p = params(vec![2.0, 0.0, 0.0, 3.0, 1.0, 1.0], 3, 2);
        let x = Tensor::from_fn(&[2, 3, 2], |i| i as f64).unwrap();
        let y = dense(&x, &p).unwrap();
        assert_eq!(y.dims(), &[2, 3, 3]);
        assert_eq!(&y.data()[0..3], &[0.0, 3.0, 1.0]);
    }
}
