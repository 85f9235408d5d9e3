use rand::Rng;

use super::{
    expect_dims, gates_backward, gates_forward, CellGrads, CellState, Gate, ParamSet, RecurrentCell,
};
use crate::error::{Error, Result};
use crate::layers::glorot_init;
use crate::scalar::Scalar;
use crate::tensor::kernels::{gemm_acc, gemm_nt_acc, gemm_tn_acc};
use crate::tensor::Tensor;

/// Fully connected LSTM parameters with gates stacked `[i f g o]`:
/// `w` is 4H×input, `r` is 4H×H and `b` is 4H.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<T> {
    pub w: Tensor<T>,
    pub r: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Scalar> LstmParams<T> {
    pub fn zeros(input: usize, hidden: usize) -> Result<Self> {
        Ok(LstmParams {
            w: Tensor::zeros(&[4 * hidden, input])?,
            r: Tensor::zeros(&[4 * hidden, hidden])?,
            b: Tensor::zeros(&[4 * hidden])?,
        })
    }

    /// Glorot-uniform weights, zero biases except the forget gate.
    pub fn init<R: Rng>(input: usize, hidden: usize, forget_bias: T, rng: &mut R) -> Result<Self> {
        let mut p = LstmParams {
            w: glorot_init(&[4 * hidden, input], rng)?,
            r: glorot_init(&[4 * hidden, hidden], rng)?,
            b: Tensor::zeros(&[4 * hidden])?,
        };
        p.gate_bias_mut(Gate::Forget)
            .iter_mut()
            .for_each(|v| *v = forget_bias);
        Ok(p)
    }

    pub fn from_parts(w: Tensor<T>, r: Tensor<T>, b: Tensor<T>) -> Result<Self> {
        let p = LstmParams { w, r, b };
        p.validate()?;
        Ok(p)
    }

    pub fn hidden(&self) -> usize {
        self.r.dims()[1]
    }

    pub fn input(&self) -> usize {
        self.w.dims()[1]
    }

    fn validate(&self) -> Result<()> {
        if self.w.rank() != 2 || self.r.rank() != 2 || self.b.rank() != 1 {
            return Err(Error::shape("LSTM parameters must be rank 2, 2 and 1"));
        }
        let h = self.r.dims()[1];
        expect_dims(&self.r, &[4 * h, h], "recurrent weights")?;
        expect_dims(&self.w, &[4 * h, self.w.dims()[1]], "input weights")?;
        expect_dims(&self.b, &[4 * h], "bias")
    }

    pub fn gate_bias_mut(&mut self, gate: Gate) -> &mut [T] {
        let h = self.hidden();
        let g = gate as usize;
        &mut self.b.data_mut()[g * h..(g + 1) * h]
    }
}

impl<T: Scalar> ParamSet<T> for LstmParams<T> {
    fn names(&self) -> &'static [&'static str] {
        &["w", "r", "b"]
    }

    fn tensors(&self) -> Vec<&Tensor<T>> {
        vec![&self.w, &self.r, &self.b]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.w, &mut self.r, &mut self.b]
    }
}

#[derive(Clone, Debug)]
pub struct LstmCache<T> {
    x: Tensor<T>,
    h_prev: Tensor<T>,
    c_prev: Tensor<T>,
    acts: Vec<T>,
    tanh_c: Vec<T>,
}

impl<T: Scalar> LstmCache<T> {
    /// Gate activations `[i f g o]` per batch row.
    pub fn gate_activations(&self) -> &[T] {
        &self.acts
    }
}

/// One LSTM step over a batch: `x` is batch×input, state tensors batch×hidden.
pub fn lstm_cell_forward<T: Scalar>(
    x: &Tensor<T>,
    prev: &CellState<T>,
    p: &LstmParams<T>,
) -> Result<(CellState<T>, LstmCache<T>)> {
    p.validate()?;
    let (hid, inp) = (p.hidden(), p.input());
    if x.rank() != 2 || x.dims()[1] != inp {
        return Err(Error::shape(format!(
            "LSTM input {:?}, expected [batch, {inp}]",
            x.dims()
        )));
    }
    let batch = x.dims()[0];
    expect_dims(&prev.h, &[batch, hid], "previous hidden state")?;
    expect_dims(&prev.c, &[batch, hid], "previous cell state")?;

    let mut z: Vec<T> = Vec::with_capacity(batch * 4 * hid);
    for _ in 0..batch {
        z.extend_from_slice(p.b.data());
    }
    gemm_nt_acc(x.data(), p.w.data(), &mut z, batch, inp, 4 * hid);
    gemm_nt_acc(prev.h.data(), p.r.data(), &mut z, batch, hid, 4 * hid);
    let out = gates_forward(&z, prev.c.data(), batch, hid);
    let dims = vec![batch, hid];
    let next = CellState {
        h: Tensor::from_parts(dims.clone(), out.h),
        c: Tensor::from_parts(dims, out.c),
    };
    let cache = LstmCache {
        x: x.clone(),
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        acts: out.acts,
        tanh_c: out.tanh_c,
    };
    Ok((next, cache))
}

/// Exact gradients of `⟨dh, h'⟩ + ⟨dc, c'⟩` for the step that produced `cache`.
pub fn lstm_cell_backward<T: Scalar>(
    p: &LstmParams<T>,
    cache: &LstmCache<T>,
    dh: &Tensor<T>,
    dc: &Tensor<T>,
) -> Result<CellGrads<T, LstmParams<T>>> {
    let mut grads = p.zeros_like();
    let (dx, prev) = backward_into(p, cache, dh, dc, &mut grads)?;
    Ok(CellGrads {
        params: grads,
        dx,
        prev,
    })
}

fn backward_into<T: Scalar>(
    p: &LstmParams<T>,
    cache: &LstmCache<T>,
    dh: &Tensor<T>,
    dc: &Tensor<T>,
    grads: &mut LstmParams<T>,
) -> Result<(Tensor<T>, CellState<T>)> {
    let (hid, inp) = (p.hidden(), p.input());
    let batch = cache.x.dims()[0];
    if cache.x.dims()[1] != inp || cache.h_prev.dims() != [batch, hid] {
        return Err(Error::shape("LSTM cache does not match parameters"));
    }
    expect_dims(dh, &[batch, hid], "upstream dh")?;
    expect_dims(dc, &[batch, hid], "upstream dc")?;

    let (dz, dc_prev) = gates_backward(
        &cache.acts,
        cache.c_prev.data(),
        &cache.tanh_c,
        dh.data(),
        dc.data(),
        batch,
        hid,
    );
    gemm_tn_acc(&dz, cache.x.data(), grads.w.data_mut(), batch, 4 * hid, inp);
    gemm_tn_acc(
        &dz,
        cache.h_prev.data(),
        grads.r.data_mut(),
        batch,
        4 * hid,
        hid,
    );
    let db = grads.b.data_mut();
    for row in dz.chunks_exact(4 * hid) {
        for (d, &v) in db.iter_mut().zip(row) {
            *d += v;
        }
    }
    let mut dx = vec![T::zero(); batch * inp];
    gemm_acc(&dz, p.w.data(), &mut dx, batch, 4 * hid, inp);
    let mut dh_prev = vec![T::zero(); batch * hid];
    gemm_acc(&dz, p.r.data(), &mut dh_prev, batch, 4 * hid, hid);
    Ok((
        Tensor::from_parts(vec![batch, inp], dx),
        CellState {
            h: Tensor::from_parts(vec![batch, hid], dh_prev),
            c: Tensor::from_parts(vec![batch, hid], dc_prev),
        },
    ))
}

impl<T: Scalar> RecurrentCell<T> for LstmParams<T> {
    type Cache = LstmCache<T>;

    fn zero_state(&self, x: &Tensor<T>) -> Result<CellState<T>> {
        CellState::zeros(&[x.dims()[0], self.hidden()])
    }

    fn step(&self, x: &Tensor<T>, prev: &CellState<T>) -> Result<(CellState<T>, LstmCache<T>)> {
        lstm_cell_forward(x, prev, self)
    }

    fn step_backward(
        &self,
        cache: &LstmCache<T>,
        dh: &Tensor<T>,
        dc: &Tensor<T>,
        grads: &mut Self,
    ) -> Result<(Tensor<T>, CellState<T>)> {
        backward_into(self, cache, dh, dc, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(batch: usize, hid: usize, c: f64) -> CellState<f64> {
        CellState {
            h: Tensor::zeros(&[batch, hid]).unwrap(),
            c: Tensor::full(&[batch, hid], c).unwrap(),
        }
    }

    #[test]
    fn zero_params_zero_input() {
        let p = LstmParams::<f64>::zeros(3, 2).unwrap();
        let x = Tensor::zeros(&[1, 3]).unwrap();
        let (next, cache) = lstm_cell_forward(&x, &state(1, 2, 0.0), &p).unwrap();
        assert!(next.h.data().iter().all(|&v| v == 0.0));
        assert!(next.c.data().iter().all(|&v| v == 0.0));
        let a = cache.gate_activations();
        // i, f, o are 0.5; g is tanh(0) = 0
        assert_eq!(&a[0..4], &[0.5; 4]);
        assert_eq!(&a[4..6], &[0.0; 2]);
        assert_eq!(&a[6..8], &[0.5; 2]);
    }

    #[test]
    fn zero_params_unit_cell() {
        let p = LstmParams::<f64>::zeros(2, 1).unwrap();
        let x = Tensor::zeros(&[1, 2]).unwrap();
        let (next, _) = lstm_cell_forward(&x, &state(1, 1, 1.0), &p).unwrap();
        assert!((next.c.data()[0] - 0.5).abs() < 1e-12);
        assert!((next.h.data()[0] - 0.231_058_578).abs() < 1e-5);
    }

    #[test]
    fn saturated_gates_carry_cell() {
        let mut p = LstmParams::<f64>::zeros(2, 3).unwrap();
        p.gate_bias_mut(Gate::Forget)
            .iter_mut()
            .for_each(|v| *v = 10.0);
        p.gate_bias_mut(Gate::Input)
            .iter_mut()
            .for_each(|v| *v = -10.0);
        let x = Tensor::from_vec(&[1, 2], vec![0.3, -0.7]).unwrap();
        let prev = CellState {
            h: Tensor::zeros(&[1, 3]).unwrap(),
            c: Tensor::from_vec(&[1, 3], vec![0.9, -0.4, 0.1]).unwrap(),
        };
        let (next, cache) = lstm_cell_forward(&x, &prev, &p).unwrap();
        for (a, b) in next.c.data().iter().zip(prev.c.data()) {
            assert!((a - b).abs() < 1e-4);
        }
        let dc = Tensor::from_vec(&[1, 3], vec![1.0, -2.0, 0.5]).unwrap();
        let dh = Tensor::zeros(&[1, 3]).unwrap();
        let g = lstm_cell_backward(&p, &cache, &dh, &dc).unwrap();
        for (a, b) in g.prev.c.data().iter().zip(dc.data()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let p = LstmParams::<f64>::init(3, 4, 1.0, &mut rng).unwrap();
        let x = Tensor::full(&[2, 3], 0.3).unwrap();
        let (_, cache) = lstm_cell_forward(&x, &state(2, 4, 0.2), &p).unwrap();
        let z = Tensor::zeros(&[2, 4]).unwrap();
        let g = lstm_cell_backward(&p, &cache, &z, &z).unwrap();
        assert!(g
            .params
            .tensors()
            .iter()
            .all(|t| t.data().iter().all(|&v| v == 0.0)));
        assert!(g.dx.data().iter().all(|&v| v == 0.0));
        assert!(g
            .prev
            .h
            .data()
            .iter()
            .chain(g.prev.c.data())
            .all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_mismatched_extents() {
        let p = LstmParams::<f64>::zeros(3, 2).unwrap();
        let x = Tensor::zeros(&[1, 4]).unwrap();
        assert!(lstm_cell_forward(&x, &state(1, 2, 0.0), &p).is_err());
        let x = Tensor::zeros(&[1, 3]).unwrap();
        assert!(lstm_cell_forward(&x, &state(1, 3, 0.0), &p).is_err());
    }

    use rand::SeedableRng;
}
