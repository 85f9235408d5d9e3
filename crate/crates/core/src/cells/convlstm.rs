use rand::Rng;

use super::{
    expect_dims, gates_backward, gates_forward, CellGrads, CellState, Gate, ParamSet, RecurrentCell,
};
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::layers::glorot_init;
use crate::scalar::Scalar;
use crate::tensor::conv::ConvGeom;
use crate::tensor::{Padding, Tensor};

/// Convolutional LSTM parameters with gates stacked `[i f g o]` along the
/// output-channel axis: `w` is 4C×C_in×K×K, `r` is 4C×C×K×K, `b` is 4C.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmParams<T> {
    pub w: Tensor<T>,
    pub r: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Scalar> ConvLstmParams<T> {
    pub fn zeros(in_channels: usize, hidden: usize, kernel: usize) -> Result<Self> {
        Ok(ConvLstmParams {
            w: Tensor::zeros(&[4 * hidden, in_channels, kernel, kernel])?,
            r: Tensor::zeros(&[4 * hidden, hidden, kernel, kernel])?,
            b: Tensor::zeros(&[4 * hidden])?,
        })
    }

    pub fn init<R: Rng>(
        in_channels: usize,
        hidden: usize,
        kernel: usize,
        forget_bias: T,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = ConvLstmParams {
            w: glorot_init(&[4 * hidden, in_channels, kernel, kernel], rng)?,
            r: glorot_init(&[4 * hidden, hidden, kernel, kernel], rng)?,
            b: Tensor::zeros(&[4 * hidden])?,
        };
        p.gate_bias_mut(Gate::Forget)
            .iter_mut()
            .for_each(|v| *v = forget_bias);
        Ok(p)
    }

    pub fn hidden(&self) -> usize {
        self.r.dims()[1]
    }

    pub fn in_channels(&self) -> usize {
        self.w.dims()[1]
    }

    pub fn kernel(&self) -> usize {
        self.w.dims()[2]
    }

    fn validate(&self) -> Result<()> {
        if self.w.rank() != 4 || self.r.rank() != 4 || self.b.rank() != 1 {
            return Err(Error::shape("ConvLSTM parameters must be rank 4, 4 and 1"));
        }
        let (h, k) = (self.hidden(), self.kernel());
        if k % 2 == 0 {
            return Err(Error::invalid(format!("ConvLSTM kernel size {k} is even")));
        }
        expect_dims(&self.w, &[4 * h, self.in_channels(), k, k], "input kernels")?;
        expect_dims(&self.r, &[4 * h, h, k, k], "recurrent kernels")?;
        expect_dims(&self.b, &[4 * h], "bias")
    }

    pub fn gate_bias_mut(&mut self, gate: Gate) -> &mut [T] {
        let h = self.hidden();
        let g = gate as usize;
        &mut self.b.data_mut()[g * h..(g + 1) * h]
    }
}

impl<T: Scalar> ParamSet<T> for ConvLstmParams<T> {
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
pub struct ConvLstmCache<T> {
    x: Tensor<T>,
    h_prev: Tensor<T>,
    c_prev: Tensor<T>,
    acts: Vec<Vec<T>>,
    tanh_c: Vec<Vec<T>>,
}

impl<T: Scalar> ConvLstmCache<T> {
    /// Gate activations of sample `s`, laid out `[i f g o]` × C × H × W.
    pub fn gate_activations(&self, s: usize) -> &[T] {
        &self.acts[s]
    }
}

struct Geometry {
    batch: usize,
    hidden: usize,
    pixels: usize,
    x: ConvGeom,
    h: ConvGeom,
}

fn geometry<T: Scalar>(p: &ConvLstmParams<T>, x: &Tensor<T>) -> Result<Geometry> {
    p.validate()?;
    if x.rank() != 4 || x.dims()[1] != p.in_channels() {
        return Err(Error::shape(format!(
            "ConvLSTM input {:?}, expected [batch, {}, H, W]",
            x.dims(),
            p.in_channels()
        )));
    }
    let (batch, c_in, hh, ww) = (x.dims()[0], x.dims()[1], x.dims()[2], x.dims()[3]);
    let k = p.kernel();
    Ok(Geometry {
        batch,
        hidden: p.hidden(),
        pixels: hh * ww,
        x: ConvGeom::new(c_in, hh, ww, k, Padding::Same)?,
        h: ConvGeom::new(p.hidden(), hh, ww, k, Padding::Same)?,
    })
}

/// One ConvLSTM step: `x` is batch×C_in×H×W, state tensors batch×C×H×W.
pub fn convlstm_cell_forward<T: Scalar>(
    x: &Tensor<T>,
    prev: &CellState<T>,
    p: &ConvLstmParams<T>,
) -> Result<(CellState<T>, ConvLstmCache<T>)> {
    let g = geometry(p, x)?;
    let sdims = [g.batch, g.hidden, x.dims()[2], x.dims()[3]];
    expect_dims(&prev.h, &sdims, "previous hidden state")?;
    expect_dims(&prev.c, &sdims, "previous cell state")?;

    let (xs, ss) = (g.x.c_in * g.pixels, g.hidden * g.pixels);
    let per_sample = map_indexed(g.batch, |s| {
        let mut z = Vec::with_capacity(4 * ss);
        for &b in p.b.data() {
            z.extend(std::iter::repeat_n(b, g.pixels));
        }
        g.x.forward_acc(
            &x.data()[s * xs..(s + 1) * xs],
            p.w.data(),
            4 * g.hidden,
            &mut z,
        );
        g.h.forward_acc(
            &prev.h.data()[s * ss..(s + 1) * ss],
            p.r.data(),
            4 * g.hidden,
            &mut z,
        );
        gates_forward(&z, &prev.c.data()[s * ss..(s + 1) * ss], 1, ss)
    });

    let mut h = Vec::with_capacity(g.batch * ss);
    let mut c = Vec::with_capacity(g.batch * ss);
    let mut acts = Vec::with_capacity(g.batch);
    let mut tanh_c = Vec::with_capacity(g.batch);
    for out in per_sample {
        h.extend_from_slice(&out.h);
        c.extend_from_slice(&out.c);
        acts.push(out.acts);
        tanh_c.push(out.tanh_c);
    }
    let next = CellState {
        h: Tensor::from_parts(sdims.to_vec(), h),
        c: Tensor::from_parts(sdims.to_vec(), c),
    };
    let cache = ConvLstmCache {
        x: x.clone(),
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        acts,
        tanh_c,
    };
    Ok((next, cache))
}

pub fn convlstm_cell_backward<T: Scalar>(
    p: &ConvLstmParams<T>,
    cache: &ConvLstmCache<T>,
    dh: &Tensor<T>,
    dc: &Tensor<T>,
) -> Result<CellGrads<T, ConvLstmParams<T>>> {
    let mut grads = p.zeros_like();
    let (dx, prev) = backward_into(p, cache, dh, dc, &mut grads)?;
    Ok(CellGrads {
        params: grads,
        dx,
        prev,
    })
}

fn backward_into<T: Scalar>(
    p: &ConvLstmParams<T>,
    cache: &ConvLstmCache<T>,
    dh: &Tensor<T>,
    dc: &Tensor<T>,
    grads: &mut ConvLstmParams<T>,
) -> Result<(Tensor<T>, CellState<T>)> {
    let g = geometry(p, &cache.x)?;
    expect_dims(dh, cache.h_prev.dims(), "upstream dh")?;
    expect_dims(dc, cache.c_prev.dims(), "upstream dc")?;
    let (xs, ss) = (g.x.c_in * g.pixels, g.hidden * g.pixels);
    let c4 = 4 * g.hidden;

    let per_sample = map_indexed(g.batch, |s| {
        let st = s * ss..(s + 1) * ss;
        let (dz, dc_prev) = gates_backward(
            &cache.acts[s],
            &cache.c_prev.data()[st.clone()],
            &cache.tanh_c[s],
            &dh.data()[st.clone()],
            &dc.data()[st.clone()],
            1,
            ss,
        );
        let mut dw = vec![T::zero(); p.w.len()];
        let mut dr = vec![T::zero(); p.r.len()];
        let mut dx = vec![T::zero(); xs];
        let mut dh_prev = vec![T::zero(); ss];
        g.x.backward_acc(
            &cache.x.data()[s * xs..(s + 1) * xs],
            p.w.data(),
            c4,
            &dz,
            &mut dw,
            Some(&mut dx),
        );
        g.h.backward_acc(
            &cache.h_prev.data()[st],
            p.r.data(),
            c4,
            &dz,
            &mut dr,
            Some(&mut dh_prev),
        );
        let db: Vec<T> = dz
            .chunks_exact(g.pixels)
            .map(|ch| ch.iter().copied().sum())
            .collect();
        (dw, dr, db, dx, dh_prev, dc_prev)
    });

    let mut dx_all = Vec::with_capacity(g.batch * xs);
    let mut dh_all = Vec::with_capacity(g.batch * ss);
    let mut dc_all = Vec::with_capacity(g.batch * ss);
    for (dw, dr, db, dx, dh_prev, dc_prev) in per_sample {
        for (t, d) in [(&mut grads.w, dw), (&mut grads.r, dr), (&mut grads.b, db)] {
            for (a, b) in t.data_mut().iter_mut().zip(d) {
                *a += b;
            }
        }
        dx_all.extend(dx);
        dh_all.extend(dh_prev);
        dc_all.extend(dc_prev);
    }
    Ok((
        Tensor::from_parts(cache.x.dims().to_vec(), dx_all),
        CellState {
            h: Tensor::from_parts(cache.h_prev.dims().to_vec(), dh_all),
            c: Tensor::from_parts(cache.c_prev.dims().to_vec(), dc_all),
        },
    ))
}

impl<T: Scalar> RecurrentCell<T> for ConvLstmParams<T> {
    type Cache = ConvLstmCache<T>;

    fn zero_state(&self, x: &Tensor<T>) -> Result<CellState<T>> {
        if x.rank() != 4 {
            return Err(Error::shape(format!(
                "ConvLSTM input {:?} is not rank 4",
                x.dims()
            )));
        }
        CellState::zeros(&[x.dims()[0], self.hidden(), x.dims()[2], x.dims()[3]])
    }

    fn step(&self, x: &Tensor<T>, prev: &CellState<T>) -> Result<(CellState<T>, ConvLstmCache<T>)> {
        convlstm_cell_forward(x, prev, self)
    }

    fn step_backward(
        &self,
        cache: &ConvLstmCache<T>,
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

    #[test]
    fn zero_params_zero_state() {
        let p = ConvLstmParams::<f64>::zeros(1, 2, 3).unwrap();
        let x = Tensor::full(&[1, 1, 4, 4], 0.7).unwrap();
        let prev = p.zero_state(&x).unwrap();
        let (next, _) = convlstm_cell_forward(&x, &prev, &p).unwrap();
        assert!(next.h.data().iter().chain(next.c.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_gates_carry_cell() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
        let mut p = ConvLstmParams::<f64>::init(1, 2, 3, 0.0, &mut rng).unwrap();
        // Keep the weights small so the biases dominate.
        for t in [&mut p.w, &mut p.r] {
            t.data_mut().iter_mut().for_each(|v| *v *= 0.01);
        }
        p.gate_bias_mut(Gate::Forget)
            .iter_mut()
            .for_each(|v| *v = 10.0);
        p.gate_bias_mut(Gate::Input)
            .iter_mut()
            .for_each(|v| *v = -10.0);
        let x = Tensor::from_fn(&[1, 1, 4, 4], |i| (i % 3) as f64 * 0.3).unwrap();
        let prev = CellState {
            h: Tensor::from_fn(&[1, 2, 4, 4], |i| (i % 5) as f64 * 0.1 - 0.2).unwrap(),
            c: Tensor::from_fn(&[1, 2, 4, 4], |i| (i % 7) as f64 * 0.2 - 0.6).unwrap(),
        };
        let (next, _) = convlstm_cell_forward(&x, &prev, &p).unwrap();
        for (a, b) in next.c.data().iter().zip(prev.c.data()) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(2);
        let p = ConvLstmParams::<f64>::init(2, 2, 3, 1.0, &mut rng).unwrap();
        let x = Tensor::full(&[2, 2, 3, 3], 0.4).unwrap();
        let prev = p.zero_state(&x).unwrap();
        let (_, cache) = convlstm_cell_forward(&x, &prev, &p).unwrap();
        let z = Tensor::zeros(&[2, 2, 3, 3]).unwrap();
        let g = convlstm_cell_backward(&p, &cache, &z, &z).unwrap();
        assert!(g
            .params
            .tensors()
            .iter()
            .all(|t| t.data().iter().all(|&v| v == 0.0)));
        assert!(g.dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_shapes() {
        let p = ConvLstmParams::<f64>::zeros(1, 2, 3).unwrap();
        let x = Tensor::zeros(&[1, 2, 4, 4]).unwrap();
        let prev = CellState::zeros(&[1, 2, 4, 4]).unwrap();
        assert!(convlstm_cell_forward(&x, &prev, &p).is_err());
        let x = Tensor::zeros(&[1, 1, 4, 4]).unwrap();
        let wrong = CellState::zeros(&[1, 2, 3, 4]).unwrap();
        assert!(convlstm_cell_forward(&x, &wrong, &p).is_err());
        assert!(ConvLstmParams::<f64>::zeros(1, 2, 2)
            .and_then(|p| convlstm_cell_forward(&x, &prev, &p))
            .is_err());
    }
}
