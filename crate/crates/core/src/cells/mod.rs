//! LSTM and ConvLSTM cells with exact backward passes, and the sequence
//! unroller that threads state through time.
//!
//! Both cells stack their four gates along the leading parameter axis in the
//! order input (i), forget (f), candidate (g), output (o):
//!
//! ```text
//! i = σ(W_i x + R_i h + b_i)      f = σ(W_f x + R_f h + b_f)
//! g = tanh(W_g x + R_g h + b_g)   o = σ(W_o x + R_o h + b_o)
//! c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
//! ```
//!
//! ConvLSTM replaces each product with a same-padded 2-D convolution.

mod convlstm;
mod lstm;
mod unroll;

pub use convlstm::{convlstm_cell_backward, convlstm_cell_forward, ConvLstmCache, ConvLstmParams};
pub use lstm::{lstm_cell_backward, lstm_cell_forward, LstmCache, LstmParams};
pub use unroll::{unroll, unroll_backward, Unrolled};

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Candidate = 2,
    Output = 3,
}

/// Hidden and cell state. For the LSTM both are `batch × hidden`; for the
/// ConvLSTM both are `batch × channels × H × W`.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState<T> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
}

pub type LstmState<T> = CellState<T>;
pub type ConvLstmState<T> = CellState<T>;

impl<T: Scalar> CellState<T> {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Ok(CellState {
            h: Tensor::zeros(dims)?,
            c: Tensor::zeros(dims)?,
        })
    }
}

/// A named group of parameter tensors. Gradients use the same type.
pub trait ParamSet<T: Scalar>: Clone {
    fn names(&self) -> &'static [&'static str];
    fn tensors(&self) -> Vec<&Tensor<T>>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
        z
    }

    fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }
}

/// Gradients produced by one backward cell step.
#[derive(Clone, Debug)]
pub struct CellGrads<T, P> {
    pub params: P,
    pub dx: Tensor<T>,
    pub prev: CellState<T>,
}

/// One recurrent step plus its exact backward pass.
pub trait RecurrentCell<T: Scalar>: ParamSet<T> {
    type Cache;

    /// Zero state sized for a batch of inputs shaped like `x`.
    fn zero_state(&self, x: &Tensor<T>) -> Result<CellState<T>>;

    fn step(&self, x: &Tensor<T>, prev: &CellState<T>) -> Result<(CellState<T>, Self::Cache)>;

    /// Backward of one step given upstream gradients on the produced `h` and
    /// `c`; parameter gradients are added into `grads`.
    fn step_backward(
        &self,
        cache: &Self::Cache,
        dh: &Tensor<T>,
        dc: &Tensor<T>,
        grads: &mut Self,
    ) -> Result<(Tensor<T>, CellState<T>)>;
}

/// Gate activations and the new state for `rows` independent units of
/// width `u`. `z` holds pre-activations laid out `[i f g o]` per row.
pub(crate) struct GateOut<T> {
    pub acts: Vec<T>,
    pub c: Vec<T>,
    pub h: Vec<T>,
    pub tanh_c: Vec<T>,
}

pub(crate) fn gates_forward<T: Scalar>(z: &[T], c_prev: &[T], rows: usize, u: usize) -> GateOut<T> {
    debug_assert_eq!(z.len(), rows * 4 * u);
    debug_assert_eq!(c_prev.len(), rows * u);
    let mut acts = vec![T::zero(); z.len()];
    let mut c = vec![T::zero(); rows * u];
    let mut h = vec![T::zero(); rows * u];
    let mut tanh_c = vec![T::zero(); rows * u];
    for r in 0..rows {
        let zr = &z[r * 4 * u..(r + 1) * 4 * u];
        let ar = &mut acts[r * 4 * u..(r + 1) * 4 * u];
        for j in 0..u {
            let i = sigmoid(zr[j]);
            let f = sigmoid(zr[u + j]);
            let g = zr[2 * u + j].tanh();
            let o = sigmoid(zr[3 * u + j]);
            ar[j] = i;
            ar[u + j] = f;
            ar[2 * u + j] = g;
            ar[3 * u + j] = o;
            let k = r * u + j;
            let cn = f * c_prev[k] + i * g;
            let tc = cn.tanh();
            c[k] = cn;
            tanh_c[k] = tc;
            h[k] = o * tc;
        }
    }
    GateOut { acts, c, h, tanh_c }
}

/// Backward through the gate nonlinearities: returns pre-activation
/// gradients and the gradient on the previous cell state.
pub(crate) fn gates_backward<T: Scalar>(
    acts: &[T],
    c_prev: &[T],
    tanh_c: &[T],
    dh: &[T],
    dc: &[T],
    rows: usize,
    u: usize,
) -> (Vec<T>, Vec<T>) {
    let one = T::one();
    let mut dz = vec![T::zero(); rows * 4 * u];
    let mut dc_prev = vec![T::zero(); rows * u];
    for r in 0..rows {
        let ar = &acts[r * 4 * u..(r + 1) * 4 * u];
        let dzr = &mut dz[r * 4 * u..(r + 1) * 4 * u];
        for j in 0..u {
            let k = r * u + j;
            let (i, f, g, o) = (ar[j], ar[u + j], ar[2 * u + j], ar[3 * u + j]);
            let tc = tanh_c[k];
            let dct = dc[k] + dh[k] * o * (one - tc * tc);
            dzr[j] = dct * g * i * (one - i);
            dzr[u + j] = dct * c_prev[k] * f * (one - f);
            dzr[2 * u + j] = dct * i * (one - g * g);
            dzr[3 * u + j] = dh[k] * tc * o * (one - o);
            dc_prev[k] = dct * f;
        }
    }
    (dz, dc_prev)
}

pub(crate) fn expect_dims<T: Scalar>(t: &Tensor<T>, dims: &[usize], what: &str) -> Result<()> {
    if t.dims() != dims {
        return Err(Error::shape(format!(
            "{what} has dims {:?}, expected {dims:?}",
            t.dims()
        )));
    }
    Ok(())
}
