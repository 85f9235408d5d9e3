//! Finite-difference verification of every backward pass, run in `f64`.
//!
//! Each op check draws random small instances, contracts the op's output
//! with a random upstream tensor `u` so the objective is the scalar
//! `⟨op(θ), u⟩`, and compares the analytic gradient of every input against
//! central differences. The model checks do the same for the full training
//! loss of each architecture at toy scale, probing a random sample of
//! coordinates in every parameter tensor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cells::{
    convlstm_cell_backward, convlstm_cell_forward, lstm_cell_backward, lstm_cell_forward, unroll,
    unroll_backward, CellState, ConvLstmParams, LstmParams, ParamSet, RecurrentCell,
};
use crate::error::Result;
use crate::exec::map_indexed;
use crate::layers::{
    batchnorm, batchnorm_backward, dense, dense_backward, dense_forward, Activation,
    BatchNormParams, DenseParams, Mode,
};
use crate::loss::{loss, loss_grad, LossKind};
use crate::metrics::{finite_diff_check, finite_diff_check_at};
use crate::model::{Architecture, Model, ModelConfig};
use crate::tensor::{conv2d, conv2d_grad, maxpool2d, maxpool2d_backward, Padding, Tensor};

pub const OP_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-6;

const OP_STEP: f64 = 1e-5;
const MODEL_STEP: f64 = 1e-6;
/// Coordinates probed per parameter tensor in the end-to-end checks;
/// smaller tensors are probed in full.
const MODEL_COORDS: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub instances: usize,
    /// Largest relative error seen over all instances and coordinates.
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

type T = f64;

fn uniform(dims: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    Tensor::from_fn(dims, |_| rng.gen_range(-scale..scale)).expect("valid dims")
}

fn inner(a: &Tensor<T>, b: &Tensor<T>) -> T {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Runs `instance` for seeds `seed..seed+n` and keeps the worst error.
fn repeat<F>(name: &str, n: usize, seed: u64, tol: f64, instance: F) -> Result<CheckOutcome>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync + Send,
{
    let errs = map_indexed(n, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        instance(&mut rng)
    });
    let mut worst = 0.0f64;
    for e in errs {
        worst = worst.max(e?);
    }
    Ok(CheckOutcome {
        name: name.to_string(),
        instances: n,
        worst,
        tolerance: tol,
    })
}

fn check_dense(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (b, i, o) = (rng.gen_range(1..4), rng.gen_range(1..6), rng.gen_range(1..5));
    let act = [Activation::None, Activation::Sigmoid, Activation::Relu][rng.gen_range(0..3)];
    let mut p = DenseParams::init(i, o, act, rng)?;
    p.b = uniform(&[o], 0.5, rng);
    let x = uniform(&[b, i], 1.0, rng);
    let u = uniform(&[b, o], 1.0, rng);
    let (_, cache) = dense_forward(&x, &p)?;
    let g = dense_backward(&p, &cache, &u)?;
    let obj = |x: &Tensor<T>, p: &DenseParams<T>| inner(&dense(x, p).expect("dense"), &u);
    let mut worst = finite_diff_check(|t| obj(t, &p), &x, &g.dx, OP_STEP)?;
    worst = worst.max(finite_diff_check(
        |t| obj(&x, &DenseParams { w: t.clone(), ..p.clone() }),
        &p.w,
        &g.dw,
        OP_STEP,
    )?);
    worst = worst.max(finite_diff_check(
        |t| obj(&x, &DenseParams { b: t.clone(), ..p.clone() }),
        &p.b,
        &g.db,
        OP_STEP,
    )?);
    Ok(worst)
}

fn check_conv(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (ci, co) = (rng.gen_range(1..4), rng.gen_range(1..4));
    let k = [1, 3][rng.gen_range(0..2)];
    let (h, w) = (rng.gen_range(3..7), rng.gen_range(3..7));
    let pad = if rng.gen_bool(0.5) { Padding::Same } else { Padding::Valid };
    let x = uniform(&[ci, h, w], 1.0, rng);
    let kern = uniform(&[co, ci, k, k], 1.0, rng);
    let bias = uniform(&[co], 1.0, rng);
    let out = conv2d(&x, &kern, &bias, pad)?;
    let u = uniform(out.dims(), 1.0, rng);
    let g = conv2d_grad(&x, &kern, &u, pad)?;
    let obj = |x: &Tensor<T>, k: &Tensor<T>, b: &Tensor<T>| inner(&conv2d(x, k, b, pad).expect("conv"), &u);
    let mut worst = finite_diff_check(|t| obj(t, &kern, &bias), &x, &g.d_input, OP_STEP)?;
    worst = worst.max(finite_diff_check(|t| obj(&x, t, &bias), &kern, &g.d_kernels, OP_STEP)?);
    worst = worst.max(finite_diff_check(|t| obj(&x, &kern, t), &bias, &g.d_bias, OP_STEP)?);
    Ok(worst)
}

fn check_pool(rng: &mut ChaCha8Rng) -> Result<f64> {
    let c = rng.gen_range(1..4);
    let (h, w) = (2 * rng.gen_range(1..4), 2 * rng.gen_range(1..4));
    let x = uniform(&[c, h, w], 1.0, rng);
    let p = maxpool2d(&x)?;
    let u = uniform(p.output.dims(), 1.0, rng);
    let dx = maxpool2d_backward(x.dims(), &p.argmax, &u)?;
    finite_diff_check(|t| inner(&maxpool2d(t).expect("pool").output, &u), &x, &dx, OP_STEP)
}

fn check_batchnorm(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (n, c) = (rng.gen_range(2..5), rng.gen_range(1..4));
    let dims: Vec<usize> = if rng.gen_bool(0.5) { vec![n, c] } else { vec![n, c, 2, 3] };
    let mut p = BatchNormParams::new(c)?;
    p.gamma = uniform(&[c], 1.5, rng);
    p.beta = uniform(&[c], 1.0, rng);
    let x = uniform(&dims, 2.0, rng);
    let u = uniform(&dims, 1.0, rng);
    let (_, cache) = batchnorm(&x, &mut p.clone(), Mode::Train)?;
    let g = batchnorm_backward(&p, &cache.expect("train cache"), &u)?;
    let obj = |x: &Tensor<T>, p: &BatchNormParams<T>| {
        inner(&batchnorm(x, &mut p.clone(), Mode::Train).expect("bn").0, &u)
    };
    let mut worst = finite_diff_check(|t| obj(t, &p), &x, &g.dx, OP_STEP)?;
    worst = worst.max(finite_diff_check(
        |t| obj(&x, &BatchNormParams { gamma: t.clone(), ..p.clone() }),
        &p.gamma,
        &g.dgamma,
        OP_STEP,
    )?);
    worst = worst.max(finite_diff_check(
        |t| obj(&x, &BatchNormParams { beta: t.clone(), ..p.clone() }),
        &p.beta,
        &g.dbeta,
        OP_STEP,
    )?);
    Ok(worst)
}

/// Perturbs each tensor of a parameter set in turn.
fn check_param_set<P, F>(p: &P, grads: &P, obj: F) -> Result<f64>
where
    P: ParamSet<T>,
    F: Fn(&P) -> T,
{
    let mut worst = 0.0f64;
    for (idx, (t, g)) in p.tensors().into_iter().zip(grads.tensors()).enumerate() {
        let e = finite_diff_check(
            |probe| {
                let mut q = p.clone();
                *q.tensors_mut()[idx] = probe.clone();
                obj(&q)
            },
            t,
            g,
            OP_STEP,
        )?;
        worst = worst.max(e);
    }
    Ok(worst)
}

/// Objective `⟨h', u_h⟩ + ⟨c', u_c⟩` of one cell step.
fn check_cell<P, F>(p: &P, x: &Tensor<T>, prev: &CellState<T>, rng: &mut ChaCha8Rng, step: F) -> Result<f64>
where
    P: RecurrentCell<T>,
    F: Fn(&P, &Tensor<T>, &CellState<T>) -> CellState<T>,
{
    let (next, cache) = p.step(x, prev)?;
    let uh = uniform(next.h.dims(), 1.0, rng);
    let uc = uniform(next.c.dims(), 1.0, rng);
    let mut grads = p.zeros_like();
    let (dx, dprev) = p.step_backward(&cache, &uh, &uc, &mut grads)?;
    let obj = |p: &P, x: &Tensor<T>, s: &CellState<T>| {
        let n = step(p, x, s);
        inner(&n.h, &uh) + inner(&n.c, &uc)
    };
    let mut worst = check_param_set(p, &grads, |q| obj(q, x, prev))?;
    worst = worst.max(finite_diff_check(|t| obj(p, t, prev), x, &dx, OP_STEP)?);
    worst = worst.max(finite_diff_check(
        |t| obj(p, x, &CellState { h: t.clone(), c: prev.c.clone() }),
        &prev.h,
        &dprev.h,
        OP_STEP,
    )?);
    worst = worst.max(finite_diff_check(
        |t| obj(p, x, &CellState { h: prev.h.clone(), c: t.clone() }),
        &prev.c,
        &dprev.c,
        OP_STEP,
    )?);
    Ok(worst)
}

fn random_lstm(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> LstmParams<T> {
    LstmParams {
        w: uniform(&[4 * hidden, input], 0.8, rng),
        r: uniform(&[4 * hidden, hidden], 0.8, rng),
        b: uniform(&[4 * hidden], 0.5, rng),
    }
}

fn random_convlstm(input: usize, hidden: usize, k: usize, rng: &mut ChaCha8Rng) -> ConvLstmParams<T> {
    ConvLstmParams {
        w: uniform(&[4 * hidden, input, k, k], 0.5, rng),
        r: uniform(&[4 * hidden, hidden, k, k], 0.5, rng),
        b: uniform(&[4 * hidden], 0.5, rng),
    }
}

fn random_state(dims: &[usize], rng: &mut ChaCha8Rng) -> CellState<T> {
    CellState {
        h: uniform(dims, 0.9, rng),
        c: uniform(dims, 1.5, rng),
    }
}

fn check_lstm(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (b, i, h) = (rng.gen_range(1..4), rng.gen_range(1..5), rng.gen_range(1..5));
    let p = random_lstm(i, h, rng);
    let x = uniform(&[b, i], 1.0, rng);
    let prev = random_state(&[b, h], rng);
    check_cell(&p, &x, &prev, rng, |p, x, s| lstm_cell_forward(x, s, p).expect("lstm").0)
}

fn check_convlstm(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (b, ci, hc) = (rng.gen_range(1..3), rng.gen_range(1..3), rng.gen_range(1..3));
    let k = [1, 3][rng.gen_range(0..2)];
    let (hh, ww) = (rng.gen_range(2..5), rng.gen_range(2..5));
    let p = random_convlstm(ci, hc, k, rng);
    let x = uniform(&[b, ci, hh, ww], 1.0, rng);
    let prev = random_state(&[b, hc, hh, ww], rng);
    check_cell(&p, &x, &prev, rng, |p, x, s| convlstm_cell_forward(x, s, p).expect("convlstm").0)
}

/// Objective `Σ_t ⟨h_t, u_t⟩ + ⟨c_T, v⟩` over an unrolled sequence.
fn check_sequence<P: RecurrentCell<T>>(p: &P, seq: &[Tensor<T>], rng: &mut ChaCha8Rng) -> Result<f64> {
    let run = unroll(seq, p)?;
    let us: Vec<Tensor<T>> = run.states.iter().map(|s| uniform(s.h.dims(), 1.0, rng)).collect();
    let v = uniform(run.last().c.dims(), 1.0, rng);
    let dh: Vec<Option<Tensor<T>>> = us.iter().cloned().map(Some).collect();
    let (grads, dxs) = unroll_backward(p, &run, &dh, Some(&v))?;
    let obj = |p: &P, seq: &[Tensor<T>]| {
        let r = unroll(seq, p).expect("unroll");
        r.states.iter().zip(&us).map(|(s, u)| inner(&s.h, u)).sum::<T>() + inner(&r.last().c, &v)
    };
    let mut worst = check_param_set(p, &grads, |q| obj(q, seq))?;
    for (t, dx) in dxs.iter().enumerate() {
        let e = finite_diff_check(
            |probe| {
                let mut s = seq.to_vec();
                s[t] = probe.clone();
                obj(p, &s)
            },
            &seq[t],
            dx,
            OP_STEP,
        )?;
        worst = worst.max(e);
    }
    Ok(worst)
}

fn check_bptt(rng: &mut ChaCha8Rng) -> Result<f64> {
    let steps = rng.gen_range(2..5);
    let b = rng.gen_range(1..3);
    if rng.gen_bool(0.5) {
        let (i, h) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let p = random_lstm(i, h, rng);
        let seq: Vec<Tensor<T>> = (0..steps).map(|_| uniform(&[b, i], 1.0, rng)).collect();
        check_sequence(&p, &seq, rng)
    } else {
        let (ci, hc, s) = (rng.gen_range(1..3), rng.gen_range(1..3), rng.gen_range(2..4));
        let p = random_convlstm(ci, hc, 3, rng);
        let seq: Vec<Tensor<T>> = (0..steps).map(|_| uniform(&[b, ci, s, s], 1.0, rng)).collect();
        check_sequence(&p, &seq, rng)
    }
}

fn check_loss(kind: LossKind, rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = rng.gen_range(1..40);
    let p = uniform(&[n], 1.0, rng);
    let o = uniform(&[n], 1.0, rng);
    let g = loss_grad(kind, &p, &o)?;
    finite_diff_check(|t| loss(kind, t, &o).expect("loss"), &p, &g, OP_STEP)
}

/// Per-op checks, `instances` random instances each.
pub fn op_checks(instances: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let tol = OP_TOLERANCE;
    Ok(vec![
        repeat("dense", instances, seed, tol, check_dense)?,
        repeat("conv2d", instances, seed, tol, check_conv)?,
        repeat("maxpool2d", instances, seed, tol, check_pool)?,
        repeat("batchnorm (train)", instances, seed, tol, check_batchnorm)?,
        repeat("lstm cell", instances, seed, tol, check_lstm)?,
        repeat("convlstm cell", instances, seed, tol, check_convlstm)?,
        repeat("unroll / bptt", instances, seed, tol, check_bptt)?,
        repeat("mae gradient", instances, seed, tol, |r| check_loss(LossKind::Mae, r))?,
        repeat("rmse gradient", instances, seed, tol, |r| check_loss(LossKind::Rmse, r))?,
    ])
}

/// Toy configuration for end-to-end checks: 8×8 frames, timestep 3,
/// width 4.
pub fn toy_config(arch: Architecture, seed: u64) -> ModelConfig {
    let mut c = ModelConfig::new(arch).with_width(4);
    c.resolution = 8;
    c.timestep = 3;
    c.conv_filters = 2;
    c.loss = LossKind::Rmse;
    c.seed = seed;
    c
}

fn check_model(arch: Architecture, rng: &mut ChaCha8Rng) -> Result<f64> {
    let cfg = toy_config(arch, rng.gen());
    let mut model = Model::<T>::new(cfg.clone())?;
    for p in model.parameters_mut() {
        if p.rank() == 1 {
            *p = p.map(|v| v + 0.1);
        }
    }
    let batch = 3;
    let r = cfg.resolution;
    let x = Tensor::from_fn(&[batch, cfg.timestep, r, r, 1], |_| rng.gen::<f64>())?;
    let y = Tensor::from_fn(&[batch, r, r, 1], |_| rng.gen::<f64>())?;
    let drop_seed: u64 = rng.gen();
    let (pred, tape) = model
        .clone()
        .forward_train(&x, &mut ChaCha8Rng::seed_from_u64(drop_seed))?;
    let grads = model.backward(&tape, &loss_grad(cfg.loss, &pred, &y)?)?;
    let mut worst = 0.0f64;
    let originals: Vec<Tensor<T>> = model.parameters().into_iter().cloned().collect();
    let mut m = model.clone();
    for (idx, (p, g)) in originals.iter().zip(&grads).enumerate() {
        let coords = if p.len() <= MODEL_COORDS {
            (0..p.len()).collect()
        } else {
            rand::seq::index::sample(rng, p.len(), MODEL_COORDS).into_vec()
        };
        let e = finite_diff_check_at(
            |probe| {
                m.parameters_mut()[idx].data_mut().copy_from_slice(probe.data());
                let mut rng = ChaCha8Rng::seed_from_u64(drop_seed);
                let (out, _) = m.forward_train(&x, &mut rng).expect("forward");
                loss(cfg.loss, &out, &y).expect("loss")
            },
            p,
            g,
            MODEL_STEP,
            &coords,
        )?;
        m.parameters_mut()[idx].data_mut().copy_from_slice(p.data());
        worst = worst.max(e);
    }
    Ok(worst)
}

/// End-to-end training-loss gradient of each architecture.
pub fn model_checks(instances: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    Architecture::ALL
        .into_iter()
        .map(|arch| {
            repeat(
                &format!("{arch} end to end"),
                instances,
                seed,
                MODEL_TOLERANCE,
                move |r| check_model(arch, r),
            )
        })
        .collect()
}

/// Largest absolute difference between an LSTM and the ConvLSTM holding the
/// same weights on 1×1 maps, over forward states and all gradients.
pub fn convlstm_lstm_gap(sets: usize, seed: u64) -> Result<f64> {
    let gaps = map_indexed(sets, |i| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let rng = &mut rng;
        let (b, inp, h) = (rng.gen_range(1..4), rng.gen_range(1..6), rng.gen_range(1..6));
        let lstm = random_lstm(inp, h, rng);
        let k = [1, 3][rng.gen_range(0..2)];
        let conv = embed_lstm(&lstm, k)?;
        let x = uniform(&[b, inp], 1.0, rng);
        let prev = random_state(&[b, h], rng);
        let dh = uniform(&[b, h], 1.0, rng);
        let dc = uniform(&[b, h], 1.0, rng);

        let (n1, c1) = lstm_cell_forward(&x, &prev, &lstm)?;
        let g1 = lstm_cell_backward(&lstm, &c1, &dh, &dc)?;
        let map = |t: &Tensor<T>| t.reshape(&[t.dims()[0], t.dims()[1], 1, 1]).expect("reshape");
        let prev_map = CellState { h: map(&prev.h), c: map(&prev.c) };
        let (n2, c2) = convlstm_cell_forward(&map(&x), &prev_map, &conv)?;
        let g2 = convlstm_cell_backward(&conv, &c2, &map(&dh), &map(&dc))?;

        let back = embed_lstm_grads(&g2.params, k);
        let pairs = [
            (&n1.h, &n2.h),
            (&n1.c, &n2.c),
            (&g1.dx, &g2.dx),
            (&g1.prev.h, &g2.prev.h),
            (&g1.prev.c, &g2.prev.c),
            (&g1.params.w, &back.w),
            (&g1.params.r, &back.r),
            (&g1.params.b, &back.b),
        ];
        Ok(pairs
            .iter()
            .flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    });
    gaps.into_iter().try_fold(0.0f64, |m, g| Ok(m.max(g?)))
}

/// ConvLSTM whose kernel centres hold the LSTM weights; with 1×1 maps the
/// off-centre taps only ever see padding.
fn embed_lstm(p: &LstmParams<T>, k: usize) -> Result<ConvLstmParams<T>> {
    let (h, i) = (p.hidden(), p.input());
    let centre = (k / 2) * k + k / 2;
    let spread = |src: &Tensor<T>, cin: usize| {
        let mut out = Tensor::zeros(&[4 * h, cin, k, k]).expect("dims");
        for (idx, &v) in src.data().iter().enumerate() {
            out.data_mut()[idx * k * k + centre] = v;
        }
        out
    };
    Ok(ConvLstmParams {
        w: spread(&p.w, i),
        r: spread(&p.r, h),
        b: p.b.clone(),
    })
}

fn embed_lstm_grads(g: &ConvLstmParams<T>, k: usize) -> LstmParams<T> {
    let centre = (k / 2) * k + k / 2;
    let pick = |src: &Tensor<T>| {
        let d = src.dims();
        let data = src.data().chunks_exact(k * k).map(|c| c[centre]).collect();
        Tensor::from_vec(&[d[0], d[1]], data).expect("dims")
    };
    LstmParams {
        w: pick(&g.w),
        r: pick(&g.r),
        b: g.b.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_broken_gradient_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = uniform(&[4], 1.0, &mut rng);
        let wrong = x.map(|v| 3.0 * v);
        let err = finite_diff_check(|t| inner(t, t), &x, &wrong, OP_STEP).unwrap();
        assert!(err > OP_TOLERANCE);
    }
}
