//! Dense row-major tensors and the primitive kernels the layers are built on.

pub(crate) mod conv;
mod io;
pub(crate) mod kernels;

pub use conv::{
    conv2d, conv2d_grad, maxpool2d, maxpool2d_backward, ConvGrads, Padding, PoolOutput,
};
pub use io::{read_tensor, read_tensor_file, write_tensor, write_tensor_file, MAGIC};

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

pub const MAX_RANK: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.len() > MAX_RANK {
        return Err(Error::invalid(format!(
            "rank {} outside 1..={MAX_RANK}",
            dims.len()
        )));
    }
    if let Some(pos) = dims.iter().position(|&d| d == 0) {
        return Err(Error::invalid(format!("extent {pos} of {dims:?} is zero")));
    }
    Ok(dims.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn full(dims: &[usize], fill: T) -> Result<Self> {
        let len = check_dims(dims)?;
        Ok(Tensor {
            dims: dims.to_vec(),
            data: vec![fill; len],
        })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::full(dims, T::zero())
    }

    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let len = check_dims(dims)?;
        if len != data.len() {
            return Err(Error::shape(format!(
                "{} values supplied for dims {dims:?} ({len} elements)",
                data.len()
            )));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(usize) -> T) -> Result<Self> {
        let len = check_dims(dims)?;
        Ok(Tensor {
            dims: dims.to_vec(),
            data: (0..len).map(&mut f).collect(),
        })
    }

    /// Zeros with the same dims as `self`.
    pub fn zeros_like(&self) -> Self {
        Tensor {
            dims: self.dims.clone(),
            data: vec![T::zero(); self.data.len()],
        }
    }

    /// Internal constructor for dims already known to be valid.
    pub(crate) fn from_parts(dims: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        debug_assert!(!dims.is_empty() && dims.len() <= MAX_RANK);
        Tensor { dims, data }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> Option<T> {
        if index.len() != self.dims.len() {
            return None;
        }
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.dims) {
            if i >= d {
                return None;
            }
            flat = flat * d + i;
        }
        Some(self.data[flat])
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    /// Converts element type, e.g. an `f64` verification tensor to `f32`.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn reshape(&self, new_dims: &[usize]) -> Result<Self> {
        let len = check_dims(new_dims)?;
        if len != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} ({} elements) to {new_dims:?} ({len} elements)",
                self.dims,
                self.data.len()
            )));
        }
        Ok(Tensor {
            dims: new_dims.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn into_reshaped(mut self, new_dims: &[usize]) -> Result<Self> {
        let len = check_dims(new_dims)?;
        if len != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} to {new_dims:?}",
                self.dims
            )));
        }
        self.dims = new_dims.to_vec();
        Ok(self)
    }

    /// Slice `i` along the leading axis, as a tensor of the remaining dims.
    /// A rank-1 tensor yields a one-element tensor.
    pub fn outer(&self, i: usize) -> Result<Self> {
        let n = self.dims[0];
        if i >= n {
            return Err(Error::invalid(format!(
                "index {i} out of range for leading extent {n}"
            )));
        }
        let inner: Vec<usize> = if self.dims.len() == 1 {
            vec![1]
        } else {
            self.dims[1..].to_vec()
        };
        let stride = self.data.len() / n;
        Ok(Tensor::from_parts(
            inner,
            self.data[i * stride..(i + 1) * stride].to_vec(),
        ))
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(parts: &[Tensor<T>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("cannot stack zero tensors"))?;
        if first.rank() >= MAX_RANK {
            return Err(Error::invalid("stacking would exceed the maximum rank"));
        }
        let mut data = Vec::with_capacity(first.len() * parts.len());
        for (k, p) in parts.iter().enumerate() {
            if p.dims != first.dims {
                return Err(Error::shape(format!(
                    "stack element {k} has dims {:?}, expected {:?}",
                    p.dims, first.dims
                )));
            }
            data.extend_from_slice(&p.data);
        }
        let mut dims = vec![parts.len()];
        dims.extend_from_slice(&first.dims);
        Ok(Tensor::from_parts(dims, data))
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Self> {
        elementwise(Elementwise::Add, self, Some(other))
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Self> {
        elementwise(Elementwise::Sub, self, Some(other))
    }

    pub fn hadamard(&self, other: &Tensor<T>) -> Result<Self> {
        elementwise(Elementwise::Hadamard, self, Some(other))
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(format!("{:?} += {:?}", self.dims, other.dims)));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Sum of elementwise products; the usual tensor inner product.
    pub fn dot(&self, other: &Tensor<T>) -> Result<T> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "dot of {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Hadamard,
    Sigmoid,
    Tanh,
    Relu,
    DSigmoid,
    DTanh,
    DRelu,
}

impl Elementwise {
    pub fn is_binary(self) -> bool {
        matches!(
            self,
            Elementwise::Add | Elementwise::Sub | Elementwise::Hadamard
        )
    }
}

#[inline]
pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Applies an elementwise kernel. Derivative kinds evaluate the activation
/// derivative at the elements of `a`.
pub fn elementwise<T: Scalar>(
    kind: Elementwise,
    a: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    if kind.is_binary() {
        let b = b.ok_or_else(|| Error::invalid(format!("{kind:?} needs a second operand")))?;
        if a.dims != b.dims {
            return Err(Error::shape(format!(
                "{kind:?} of {:?} and {:?}",
                a.dims, b.dims
            )));
        }
        let op: fn(T, T) -> T = match kind {
            Elementwise::Add => |x, y| x + y,
            Elementwise::Sub => |x, y| x - y,
            _ => |x, y| x * y,
        };
        let data = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| op(x, y))
            .collect();
        return Ok(Tensor::from_parts(a.dims.clone(), data));
    }
    let f: fn(T) -> T = match kind {
        Elementwise::Sigmoid => sigmoid,
        Elementwise::Tanh => |x: T| x.tanh(),
        Elementwise::Relu => relu,
        Elementwise::DSigmoid => |x: T| {
            let s = sigmoid(x);
            s * (T::one() - s)
        },
        Elementwise::DTanh => |x: T| {
            let t = x.tanh();
            T::one() - t * t
        },
        _ => |x: T| if x > T::zero() { T::one() } else { T::zero() },
    };
    Ok(a.map(f))
}

/// Matrix product of rank-2 tensors.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::shape(format!(
            "matmul needs rank-2 operands, got {:?} and {:?}",
            a.dims, b.dims
        )));
    }
    let (m, k) = (a.dims[0], a.dims[1]);
    let (k2, n) = (b.dims[0], b.dims[1]);
    if k != k2 {
        return Err(Error::shape(format!(
            "inner extents differ: {:?} x {:?}",
            a.dims, b.dims
        )));
    }
    let mut out = vec![T::zero(); m * n];
    kernels::gemm(&a.data, &b.data, &mut out, m, k, n);
    Ok(Tensor::from_parts(vec![m, n], out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn create_fills_and_validates() {
        let t = Tensor::<f32>::full(&[2, 3], 0.0).unwrap();
        assert_eq!(t.len(), 6);
        assert!(t.data().iter().all(|&v| v == 0.0));
        let ones = Tensor::<f32>::full(&[2, 1, 2, 2], 1.0).unwrap();
        assert_eq!(ones.sum(), 8.0);
        let frame = Tensor::<f32>::zeros(&[64, 64, 1]).unwrap();
        assert_eq!(frame.len(), 4096);
        assert!(Tensor::<f32>::zeros(&[2, 0]).is_err());
        assert!(Tensor::<f32>::zeros(&[]).is_err());
        assert!(Tensor::<f32>::zeros(&[1, 1, 1, 1, 1, 1]).is_err());
    }

    #[test]
    fn activations_at_known_points() {
        let z = Tensor::<f64>::from_vec(&[2], vec![0.0, 0.0]).unwrap();
        let s = elementwise(Elementwise::Sigmoid, &z, None).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let t = elementwise(Elementwise::Tanh, &z, None).unwrap();
        assert_eq!(t.data(), &[0.0, 0.0]);
        let x = Tensor::<f64>::from_vec(&[2], vec![-1.0, 2.0]).unwrap();
        let r = elementwise(Elementwise::Relu, &x, None).unwrap();
        assert_eq!(r.data(), &[0.0, 2.0]);
        let dr = elementwise(Elementwise::DRelu, &x, None).unwrap();
        assert_eq!(dr.data(), &[0.0, 1.0]);
    }

    #[test]
    fn hadamard_and_mismatch() {
        let a = Tensor::<f32>::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::<f32>::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        assert_eq!(a.hadamard(&b).unwrap().data(), &[3.0, 8.0]);
        let c = Tensor::<f32>::zeros(&[3]).unwrap();
        assert!(matches!(a.add(&c), Err(Error::Shape(_))));
        assert!(elementwise(Elementwise::Add, &a, None).is_err());
    }

    #[test]
    fn derivative_kinds_match_closed_forms() {
        let x = Tensor::<f64>::from_fn(&[201], |i| -10.0 + 0.1 * i as f64).unwrap();
        let ds = elementwise(Elementwise::DSigmoid, &x, None).unwrap();
        let dt = elementwise(Elementwise::DTanh, &x, None).unwrap();
        for ((&xi, &d), &e) in x.data().iter().zip(ds.data()).zip(dt.data()) {
            let s = 1.0 / (1.0 + (-xi).exp());
            assert!((d - s * (1.0 - s)).abs() < 1e-7);
            assert!((e - (1.0 - xi.tanh().powi(2))).abs() < 1e-7);
        }
    }

    #[test]
    fn matmul_hand_cases() {
        let a = Tensor::<f32>::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::<f32>::from_vec(&[2, 1], vec![3.0, 4.0]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[11.0]);
        let id = Tensor::<f32>::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = Tensor::<f32>::from_vec(&[2, 2], vec![5.0, -1.0, 2.5, 7.0]).unwrap();
        assert_eq!(matmul(&id, &m).unwrap(), m);
        assert!(matmul(&a, &a).is_err());
        let v = Tensor::<f32>::zeros(&[2]).unwrap();
        assert!(matmul(&v, &b).is_err());
    }

    #[test]
    fn matmul_dims_against_triple_loop() {
        for m in 1..=3 {
            for k in 1..=3 {
                for n in 1..=3 {
                    let a =
                        Tensor::<f64>::from_fn(&[m, k], |i| (i as f64 * 7.0) % 5.0 - 2.0).unwrap();
                    let b =
                        Tensor::<f64>::from_fn(&[k, n], |i| (i as f64 * 3.0) % 4.0 - 1.0).unwrap();
                    let c = matmul(&a, &b).unwrap();
                    assert_eq!(c.dims(), &[m, n]);
                    for i in 0..m {
                        for j in 0..n {
                            let mut s = 0.0;
                            for p in 0..k {
                                s += a.data()[i * k + p] * b.data()[p * n + j];
                            }
                            assert_eq!(c.data()[i * n + j], s);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn reshape_cases() {
        let t = Tensor::<f32>::from_fn(&[2, 3], |i| i as f32).unwrap();
        let flat = t.reshape(&[6]).unwrap();
        assert_eq!(flat.data(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(matches!(t.reshape(&[7]), Err(Error::Shape(_))));
        let sq = Tensor::<f32>::from_fn(&[4, 4], |i| i as f32 * 0.5).unwrap();
        assert_eq!(sq.reshape(&[16]).unwrap().reshape(&[4, 4]).unwrap(), sq);
    }

    #[test]
    fn stack_and_outer_are_inverse() {
        let a = Tensor::<f32>::from_fn(&[2, 2], |i| i as f32).unwrap();
        let b = a.scale(2.0);
        let s = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.dims(), &[2, 2, 2]);
        assert_eq!(s.outer(0).unwrap(), a);
        assert_eq!(s.outer(1).unwrap(), b);
        assert!(s.outer(2).is_err());
    }
}
