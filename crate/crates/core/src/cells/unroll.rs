use super::{CellState, RecurrentCell};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// States and caches of a left-to-right pass over a sequence.
#[derive(Debug)]
pub struct Unrolled<T, C> {
    /// State after each step; the last one summarizes the sequence.
    pub states: Vec<CellState<T>>,
    pub caches: Vec<C>,
}

impl<T, C> Unrolled<T, C> {
    pub fn last(&self) -> &CellState<T> {
        self.states
            .last()
            .expect("unrolled sequences are non-empty")
    }
}

/// Applies `cell` across `sequence` starting from the zero state.
pub fn unroll<T, P>(sequence: &[Tensor<T>], cell: &P) -> Result<Unrolled<T, P::Cache>>
where
    T: Scalar,
    P: RecurrentCell<T>,
{
    let first = sequence
        .first()
        .ok_or_else(|| Error::invalid("cannot unroll an empty sequence"))?;
    let mut state = cell.zero_state(first)?;
    let mut states = Vec::with_capacity(sequence.len());
    let mut caches = Vec::with_capacity(sequence.len());
    for (t, x) in sequence.iter().enumerate() {
        if x.dims() != first.dims() {
            return Err(Error::shape(format!(
                "step {t} has dims {:?}, step 0 has {:?}",
                x.dims(),
                first.dims()
            )));
        }
        let (next, cache) = cell.step(x, &state)?;
        states.push(next.clone());
        caches.push(cache);
        state = next;
    }
    Ok(Unrolled { states, caches })
}

/// Backpropagation through time. `dh` holds the upstream gradient on each
/// step's hidden output (`None` where nothing flows in); `dc_last` is the
/// upstream gradient on the final cell state. Returns parameter gradients
/// summed over steps and the input gradient of every step.
pub fn unroll_backward<T, P>(
    cell: &P,
    unrolled: &Unrolled<T, P::Cache>,
    dh: &[Option<Tensor<T>>],
    dc_last: Option<&Tensor<T>>,
) -> Result<(P, Vec<Tensor<T>>)>
where
    T: Scalar,
    P: RecurrentCell<T>,
{
    let steps = unrolled.caches.len();
    if dh.len() != steps {
        return Err(Error::shape(format!(
            "{} upstream gradients for {steps} steps",
            dh.len()
        )));
    }
    let mut grads = cell.zeros_like();
    let last = unrolled.last();
    let mut carry_h = last.h.zeros_like();
    let mut carry_c = match dc_last {
        Some(dc) => {
            if dc.dims() != last.c.dims() {
                return Err(Error::shape("final cell-state gradient has wrong dims"));
            }
            dc.clone()
        }
        None => last.c.zeros_like(),
    };
    let mut dxs = vec![None; steps];
    for t in (0..steps).rev() {
        if let Some(d) = &dh[t] {
            carry_h.add_assign(d)?;
        }
        let (dx, prev) = cell.step_backward(&unrolled.caches[t], &carry_h, &carry_c, &mut grads)?;
        dxs[t] = Some(dx);
        carry_h = prev.h;
        carry_c = prev.c;
    }
    Ok((
        grads,
        dxs.into_iter().map(|d| d.expect("filled above")).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::{lstm_cell_forward, LstmParams};
    use rand::SeedableRng;

    #[test]
    fn single_step_is_one_cell_application() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p = LstmParams::<f64>::init(2, 3, 1.0, &mut rng).unwrap();
        let x = Tensor::from_vec(&[1, 2], vec![0.5, -0.5]).unwrap();
        let u = unroll(std::slice::from_ref(&x), &p).unwrap();
        let (direct, _) = lstm_cell_forward(&x, &CellState::zeros(&[1, 3]).unwrap(), &p).unwrap();
        assert_eq!(u.states.len(), 1);
        assert_eq!(u.last(), &direct);
    }

    #[test]
    fn five_steps_five_states() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let p = LstmParams::<f32>::init(4, 2, 1.0, &mut rng).unwrap();
        let seq: Vec<_> = (0..5)
            .map(|t| Tensor::full(&[1, 4], t as f32 * 0.1).unwrap())
            .collect();
        let u = unroll(&seq, &p).unwrap();
        assert_eq!(u.states.len(), 5);
        assert_eq!(u.caches.len(), 5);
    }

    #[test]
    fn empty_and_ragged_sequences_fail() {
        let p = LstmParams::<f32>::zeros(2, 2).unwrap();
        assert!(unroll::<f32, _>(&[], &p).is_err());
        let seq = vec![
            Tensor::zeros(&[1, 2]).unwrap(),
            Tensor::zeros(&[2, 2]).unwrap(),
        ];
        assert!(unroll(&seq, &p).is_err());
    }
}
