//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::invalid(format!("{name} = {b} outside (0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        Ok(())
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub v: Tensor<T>,
    pub s: Tensor<T>,
    pub step: u64,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(param: &Tensor<T>, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(AdamState {
            v: param.zeros_like(),
            s: param.zeros_like(),
            step: 0,
            config,
        })
    }
}

/// One Adam update:
///
/// ```text
/// v ← β₁v + (1−β₁)g        s ← β₂s + (1−β₂)g²
/// v̂ = v/(1−β₁ᵗ)            ŝ = s/(1−β₂ᵗ)
/// w ← w − η·v̂/(√ŝ + ε)
/// ```
pub fn adam_step<T: Scalar>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut AdamState<T>,
) -> Result<()> {
    state.config.validate()?;
    if param.dims() != grad.dims()
        || param.dims() != state.v.dims()
        || param.dims() != state.s.dims()
    {
        return Err(Error::shape(format!(
            "adam: param {:?}, grad {:?}, moments {:?}/{:?}",
            param.dims(),
            grad.dims(),
            state.v.dims(),
            state.s.dims()
        )));
    }
    state.step += 1;
    let cfg = state.config;
    let t = state.step as i32;
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let one = T::one();
    let c1 = T::from_f64(1.0 - cfg.beta1.powi(t));
    let c2 = T::from_f64(1.0 - cfg.beta2.powi(t));
    let eta = T::from_f64(cfg.learning_rate);
    let eps = T::from_f64(cfg.epsilon);
    let v = state.v.data_mut();
    let s = state.s.data_mut();
    for (((w, &g), vi), si) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(v.iter_mut())
        .zip(s.iter_mut())
    {
        *vi = b1 * *vi + (one - b1) * g;
        *si = b2 * *si + (one - b2) * g * g;
        let v_hat = *vi / c1;
        let s_hat = *si / c2;
        *w -= eta * v_hat / (s_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_param_bitwise() {
        let mut w = Tensor::from_vec(&[3], vec![0.1f32, -7.25, 3.0e-5]).unwrap();
        let before = w.clone();
        let mut st = AdamState::new(&w, AdamConfig::default()).unwrap();
        let zero = w.zeros_like();
        adam_step(&mut w, &zero, &mut st).unwrap();
        assert_eq!(w.data(), before.data());
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut w = Tensor::from_vec(&[1], vec![0.0f64]).unwrap();
        let g = Tensor::from_vec(&[1], vec![0.5]).unwrap();
        let mut st = AdamState::new(&w, AdamConfig::default()).unwrap();
        adam_step(&mut w, &g, &mut st).unwrap();
        let expect = -1e-3 * 0.5 / (0.5 + 1e-8);
        assert!((w.data()[0] - expect).abs() < 1e-12);
        assert!((w.data()[0] + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn minimizes_shifted_quadratic() {
        let mut w = Tensor::from_vec(&[1], vec![0.0f64]).unwrap();
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(&w, cfg).unwrap();
        let mut reached = None;
        for i in 0..500 {
            let g = Tensor::from_vec(&[1], vec![2.0 * (w.data()[0] - 3.0)]).unwrap();
            adam_step(&mut w, &g, &mut st).unwrap();
            if reached.is_none() && (w.data()[0] - 3.0).abs() < 1e-2 {
                reached = Some(i);
            }
        }
        assert!((w.data()[0] - 3.0).abs() < 1e-2, "w = {}", w.data()[0]);
        assert!(reached.is_some());
    }

    #[test]
    fn errors() {
        let w = Tensor::<f32>::zeros(&[2]).unwrap();
        let bad = AdamConfig {
            learning_rate: 0.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::new(&w, bad).is_err());
        let mut w2 = w.clone();
        let mut st = AdamState::new(&w, AdamConfig::default()).unwrap();
        let g = Tensor::<f32>::zeros(&[3]).unwrap();
        assert!(adam_step(&mut w2, &g, &mut st).is_err());
    }
}
