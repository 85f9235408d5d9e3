use rand::Rng;

use crate::cells::{
    unroll, unroll_backward, ConvLstmCache, ConvLstmParams, LstmCache, LstmParams, ParamSet,
    Unrolled,
};
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::layers::{
    batchnorm, batchnorm_backward, batchnorm_inference, dense, dense_backward, dense_forward,
    dropout, dropout_backward, Activation, BatchNormCache, BatchNormParams, DenseCache,
    DenseParams, DropoutMask, Mode,
};
use crate::scalar::Scalar;
use crate::tensor::conv::{ConvGeom, Padding};
use crate::tensor::{maxpool2d, Tensor};

/// One stage of a model. Inputs always carry a leading batch axis.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    /// Keeps the first `keep` axes and reshapes the rest to `tail`.
    Reshape {
        keep: usize,
        tail: Vec<usize>,
    },
    /// Same-padded convolution over the last three axes (C×H×W), applied
    /// independently to every leading index.
    Conv2d {
        kernels: Tensor<T>,
        bias: Tensor<T>,
        activation: Activation,
    },
    /// 2×2 stride-2 pooling over the last three axes.
    MaxPool,
    /// Input `[B, T, F]`; output `[B, T, H]` or `[B, H]`.
    Lstm {
        cell: LstmParams<T>,
        sequences: bool,
    },
    /// Input `[B, T, C, H, W]`; output `[B, T, Hc, H, W]` or `[B, Hc, H, W]`.
    ConvLstm {
        cell: ConvLstmParams<T>,
        sequences: bool,
    },
    /// Merges the first `lead` axes into the batch; the next axis holds channels.
    BatchNorm {
        params: BatchNormParams<T>,
        lead: usize,
    },
    Dropout {
        rate: f64,
    },
    /// Acts on the last axis.
    Dense(DenseParams<T>),
}

#[derive(Debug)]
pub(crate) enum Cache<T> {
    Reshape(Vec<usize>),
    Conv {
        x: Tensor<T>,
        y: Tensor<T>,
    },
    Pool {
        dims: Vec<usize>,
        argmax: Vec<Vec<usize>>,
    },
    Lstm {
        unrolled: Unrolled<T, LstmCache<T>>,
        dims: Vec<usize>,
    },
    ConvLstm {
        unrolled: Unrolled<T, ConvLstmCache<T>>,
        dims: Vec<usize>,
    },
    BatchNorm(BatchNormCache<T>),
    Dropout(Option<DropoutMask<T>>),
    Dense(DenseCache<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Reshape { .. } => "reshape",
            Layer::Conv2d { .. } => "conv2d",
            Layer::MaxPool => "maxpool",
            Layer::Lstm { .. } => "lstm",
            Layer::ConvLstm { .. } => "convlstm",
            Layer::BatchNorm { .. } => "batchnorm",
            Layer::Dropout { .. } => "dropout",
            Layer::Dense(_) => "dense",
        }
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self, Layer::Lstm { .. } | Layer::ConvLstm { .. })
    }

    /// Trainable tensors with their short names.
    pub fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::Conv2d { kernels, bias, .. } => vec![("k", kernels), ("b", bias)],
            Layer::Lstm { cell, .. } => cell.names().iter().copied().zip(cell.tensors()).collect(),
            Layer::ConvLstm { cell, .. } => {
                cell.names().iter().copied().zip(cell.tensors()).collect()
            }
            Layer::BatchNorm { params, .. } => {
                vec![("gamma", &params.gamma), ("beta", &params.beta)]
            }
            Layer::Dense(p) => vec![("w", &p.w), ("b", &p.b)],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv2d { kernels, bias, .. } => vec![kernels, bias],
            Layer::Lstm { cell, .. } => cell.tensors_mut(),
            Layer::ConvLstm { cell, .. } => cell.tensors_mut(),
            Layer::BatchNorm { params, .. } => vec![&mut params.gamma, &mut params.beta],
            Layer::Dense(p) => vec![&mut p.w, &mut p.b],
            _ => Vec::new(),
        }
    }

    /// Non-trainable state that still belongs in a checkpoint.
    pub fn buffers(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::BatchNorm { params, .. } => vec![
                ("running_mean", &params.running_mean),
                ("running_var", &params.running_var),
            ],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::BatchNorm { params, .. } => {
                vec![&mut params.running_mean, &mut params.running_var]
            }
            _ => Vec::new(),
        }
    }

    pub(crate) fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Reshape { keep, tail } => reshape(x, *keep, tail),
            Layer::Conv2d {
                kernels,
                bias,
                activation,
            } => conv_forward(x, kernels, bias, *activation),
            Layer::MaxPool => Ok(pool_forward(x)?.0),
            Layer::Lstm { cell, sequences } => {
                let u = unroll(&split_steps(x, cell.input(), 3)?, cell)?;
                recurrent_output(&u, *sequences)
            }
            Layer::ConvLstm { cell, sequences } => {
                let u = unroll(&split_steps(x, cell.in_channels(), 5)?, cell)?;
                recurrent_output(&u, *sequences)
            }
            Layer::BatchNorm { params, lead } => {
                let merged = merge_lead(x, *lead)?;
                batchnorm_inference(&merged, params)?.reshape(x.dims())
            }
            Layer::Dropout { .. } => Ok(x.clone()),
            Layer::Dense(p) => dense(x, p),
        }
    }

    pub(crate) fn forward_train<R: Rng>(
        &mut self,
        x: &Tensor<T>,
        rng: &mut R,
    ) -> Result<(Tensor<T>, Cache<T>)> {
        match self {
            Layer::Lstm { cell, sequences } => {
                let unrolled = unroll(&split_steps(x, cell.input(), 3)?, cell)?;
                let y = recurrent_output(&unrolled, *sequences)?;
                let dims = x.dims().to_vec();
                Ok((y, Cache::Lstm { unrolled, dims }))
            }
            Layer::ConvLstm { cell, sequences } => {
                let unrolled = unroll(&split_steps(x, cell.in_channels(), 5)?, cell)?;
                let y = recurrent_output(&unrolled, *sequences)?;
                let dims = x.dims().to_vec();
                Ok((y, Cache::ConvLstm { unrolled, dims }))
            }
            Layer::BatchNorm { params, lead } => {
                let merged = merge_lead(x, *lead)?;
                let (y, cache) = batchnorm(&merged, params, Mode::Train)?;
                let cache = cache.expect("train mode always caches");
                Ok((y.reshape(x.dims())?, Cache::BatchNorm(cache)))
            }
            Layer::Dropout { rate } => {
                let (y, mask) = dropout(x, *rate, Mode::Train, rng)?;
                Ok((y, Cache::Dropout(mask)))
            }
            Layer::Dense(p) => {
                let (y, cache) = dense_forward(x, p)?;
                Ok((y, Cache::Dense(cache)))
            }
            Layer::MaxPool => {
                let (y, argmax) = pool_forward(x)?;
                Ok((
                    y,
                    Cache::Pool {
                        dims: x.dims().to_vec(),
                        argmax,
                    },
                ))
            }
            Layer::Conv2d { .. } => {
                let y = self.forward_eval(x)?;
                Ok((y.clone(), Cache::Conv { x: x.clone(), y }))
            }
            Layer::Reshape { .. } => Ok((self.forward_eval(x)?, Cache::Reshape(x.dims().to_vec()))),
        }
    }

    /// Returns the input gradient and the gradients of [`Layer::params`] in
    /// the same order.
    pub(crate) fn backward(
        &self,
        cache: &Cache<T>,
        dy: &Tensor<T>,
    ) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        match (self, cache) {
            (Layer::Reshape { .. }, Cache::Reshape(dims)) => Ok((dy.reshape(dims)?, Vec::new())),
            (
                Layer::Conv2d {
                    kernels,
                    activation,
                    ..
                },
                Cache::Conv { x, y },
            ) => conv_backward(x, y, kernels, *activation, dy),
            (Layer::MaxPool, Cache::Pool { dims, argmax }) => {
                Ok((pool_backward(dims, argmax, dy)?, Vec::new()))
            }
            (Layer::Lstm { cell, sequences }, Cache::Lstm { unrolled, dims }) => {
                let dh = step_grads(dy, unrolled.caches.len(), *sequences)?;
                let (g, dxs) = unroll_backward(cell, unrolled, &dh, None)?;
                let dx = merge_steps(&dxs)?;
                expect_same(&dx, dims)?;
                Ok((dx, g.tensors().into_iter().cloned().collect()))
            }
            (Layer::ConvLstm { cell, sequences }, Cache::ConvLstm { unrolled, dims }) => {
                let dh = step_grads(dy, unrolled.caches.len(), *sequences)?;
                let (g, dxs) = unroll_backward(cell, unrolled, &dh, None)?;
                let dx = merge_steps(&dxs)?;
                expect_same(&dx, dims)?;
                Ok((dx, g.tensors().into_iter().cloned().collect()))
            }
            (Layer::BatchNorm { params, lead }, Cache::BatchNorm(c)) => {
                let g = batchnorm_backward(params, c, &merge_lead(dy, *lead)?)?;
                Ok((g.dx.reshape(dy.dims())?, vec![g.dgamma, g.dbeta]))
            }
            (Layer::Dropout { .. }, Cache::Dropout(mask)) => {
                Ok((dropout_backward(mask.as_ref(), dy)?, Vec::new()))
            }
            (Layer::Dense(p), Cache::Dense(c)) => {
                let g = dense_backward(p, c, dy)?;
                Ok((g.dx, vec![g.dw, g.db]))
            }
            _ => Err(Error::invalid(format!(
                "cache does not belong to a {} layer",
                self.kind()
            ))),
        }
    }
}

fn expect_same<T: Scalar>(t: &Tensor<T>, dims: &[usize]) -> Result<()> {
    if t.dims() != dims {
        return Err(Error::shape(format!(
            "gradient {:?} does not match input {dims:?}",
            t.dims()
        )));
    }
    Ok(())
}

fn reshape<T: Scalar>(x: &Tensor<T>, keep: usize, tail: &[usize]) -> Result<Tensor<T>> {
    if x.rank() < keep {
        return Err(Error::shape(format!(
            "cannot keep {keep} axes of {:?}",
            x.dims()
        )));
    }
    let mut dims = x.dims()[..keep].to_vec();
    dims.extend_from_slice(tail);
    x.reshape(&dims)
}

fn merge_lead<T: Scalar>(x: &Tensor<T>, lead: usize) -> Result<Tensor<T>> {
    if x.rank() <= lead {
        return Err(Error::shape(format!(
            "{:?} has no channel axis after {lead} leading axes",
            x.dims()
        )));
    }
    let mut dims = vec![x.dims()[..lead].iter().product()];
    dims.extend_from_slice(&x.dims()[lead..]);
    x.reshape(&dims)
}

/// Splits a batch-major `[B, T, rest..]` tensor of the given rank into `T`
/// step tensors `[B, rest..]`, checking the feature or channel axis.
fn split_steps<T: Scalar>(x: &Tensor<T>, features: usize, rank: usize) -> Result<Vec<Tensor<T>>> {
    if x.rank() != rank || x.dims()[2] != features {
        return Err(Error::shape(format!(
            "recurrent input {:?}, expected rank {rank} with {features} on axis 2",
            x.dims()
        )));
    }
    let (b, t) = (x.dims()[0], x.dims()[1]);
    let inner = x.len() / (b * t);
    let mut dims = vec![b];
    dims.extend_from_slice(&x.dims()[2..]);
    (0..t)
        .map(|s| {
            let mut v = Vec::with_capacity(b * inner);
            for i in 0..b {
                let off = (i * t + s) * inner;
                v.extend_from_slice(&x.data()[off..off + inner]);
            }
            Tensor::from_vec(&dims, v)
        })
        .collect()
}

/// Inverse of [`split_steps`].
fn merge_steps<T: Scalar>(steps: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = steps
        .first()
        .ok_or_else(|| Error::invalid("no steps to merge"))?;
    let b = first.dims()[0];
    let t = steps.len();
    let inner = first.len() / b;
    let mut data = vec![T::zero(); b * t * inner];
    for (s, step) in steps.iter().enumerate() {
        for i in 0..b {
            let off = (i * t + s) * inner;
            data[off..off + inner].copy_from_slice(&step.data()[i * inner..(i + 1) * inner]);
        }
    }
    let mut dims = vec![b, t];
    dims.extend_from_slice(&first.dims()[1..]);
    Tensor::from_vec(&dims, data)
}

fn recurrent_output<T: Scalar, C>(u: &Unrolled<T, C>, sequences: bool) -> Result<Tensor<T>> {
    if sequences {
        let hs: Vec<Tensor<T>> = u.states.iter().map(|s| s.h.clone()).collect();
        merge_steps(&hs)
    } else {
        Ok(u.last().h.clone())
    }
}

fn step_grads<T: Scalar>(
    dy: &Tensor<T>,
    steps: usize,
    sequences: bool,
) -> Result<Vec<Option<Tensor<T>>>> {
    if sequences {
        if dy.rank() < 2 || dy.dims()[1] != steps {
            return Err(Error::shape(format!(
                "sequence gradient {:?} lacks {steps} steps",
                dy.dims()
            )));
        }
        let features = dy.dims()[2];
        Ok(split_steps(dy, features, dy.rank())?
            .into_iter()
            .map(Some)
            .collect())
    } else {
        let mut v = vec![None; steps];
        v[steps - 1] = Some(dy.clone());
        Ok(v)
    }
}

/// (leading count, C, H, W) of a tensor whose last three axes are an image.
fn image_dims<T: Scalar>(x: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    let r = x.rank();
    if r < 3 {
        return Err(Error::shape(format!(
            "{:?} does not end in C×H×W",
            x.dims()
        )));
    }
    let d = x.dims();
    let (c, h, w) = (d[r - 3], d[r - 2], d[r - 1]);
    Ok((x.len() / (c * h * w), c, h, w))
}

fn conv_forward<T: Scalar>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    act: Activation,
) -> Result<Tensor<T>> {
    let (lead, c, h, w) = image_dims(x)?;
    let (co, k) = (kernels.dims()[0], kernels.dims()[2]);
    if kernels.dims() != [co, c, k, k] || bias.dims() != [co] {
        return Err(Error::shape(format!(
            "conv kernels {:?} / bias {:?} do not fit {c} input channels",
            kernels.dims(),
            bias.dims()
        )));
    }
    let geom = ConvGeom::new(c, h, w, k, Padding::Same)?;
    let (img, pix) = (c * h * w, h * w);
    let outs = map_indexed(lead, |i| {
        let mut out = vec![T::zero(); co * pix];
        for (o, &b) in bias.data().iter().enumerate() {
            out[o * pix..(o + 1) * pix].iter_mut().for_each(|v| *v = b);
        }
        geom.forward_acc(
            &x.data()[i * img..(i + 1) * img],
            kernels.data(),
            co,
            &mut out,
        );
        if act != Activation::None {
            out.iter_mut().for_each(|v| *v = act.apply(*v));
        }
        out
    });
    let mut dims = x.dims().to_vec();
    let r = dims.len();
    dims[r - 3] = co;
    Tensor::from_vec(&dims, outs.concat())
}

fn conv_backward<T: Scalar>(
    x: &Tensor<T>,
    y: &Tensor<T>,
    kernels: &Tensor<T>,
    act: Activation,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    expect_same(dy, y.dims())?;
    let (lead, c, h, w) = image_dims(x)?;
    let (co, k) = (kernels.dims()[0], kernels.dims()[2]);
    let geom = ConvGeom::new(c, h, w, k, Padding::Same)?;
    let (img, pix) = (c * h * w, h * w);
    let dz: Vec<T> = dy
        .data()
        .iter()
        .zip(y.data())
        .map(|(&g, &v)| g * act.derivative_from_output(v))
        .collect();
    let parts = map_indexed(lead, |i| {
        let mut dk = vec![T::zero(); kernels.len()];
        let mut dx = vec![T::zero(); img];
        geom.backward_acc(
            &x.data()[i * img..(i + 1) * img],
            kernels.data(),
            co,
            &dz[i * co * pix..(i + 1) * co * pix],
            &mut dk,
            Some(&mut dx),
        );
        (dk, dx)
    });
    let mut dk = kernels.zeros_like();
    let mut dx = Vec::with_capacity(x.len());
    for (pk, px) in parts {
        for (a, b) in dk.data_mut().iter_mut().zip(pk) {
            *a += b;
        }
        dx.extend(px);
    }
    let mut db = vec![T::zero(); co];
    for (j, chunk) in dz.chunks_exact(pix).enumerate() {
        db[j % co] += chunk.iter().copied().sum::<T>();
    }
    Ok((
        Tensor::from_vec(x.dims(), dx)?,
        vec![dk, Tensor::from_vec(&[co], db)?],
    ))
}

fn pool_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<Vec<usize>>)> {
    let (lead, c, h, w) = image_dims(x)?;
    let img = c * h * w;
    let mut data = Vec::with_capacity(x.len() / 4);
    let mut argmax = Vec::with_capacity(lead);
    for i in 0..lead {
        let one = Tensor::from_vec(&[c, h, w], x.data()[i * img..(i + 1) * img].to_vec())?;
        let p = maxpool2d(&one)?;
        data.extend_from_slice(p.output.data());
        argmax.push(p.argmax);
    }
    let mut dims = x.dims().to_vec();
    let r = dims.len();
    dims[r - 2] = h / 2;
    dims[r - 1] = w / 2;
    Ok((Tensor::from_vec(&dims, data)?, argmax))
}

fn pool_backward<T: Scalar>(
    dims: &[usize],
    argmax: &[Vec<usize>],
    dy: &Tensor<T>,
) -> Result<Tensor<T>> {
    let mut dx = Tensor::zeros(dims)?;
    let img = dx.len() / argmax.len().max(1);
    let per = dy.len() / argmax.len().max(1);
    if per * argmax.len() != dy.len() {
        return Err(Error::shape(
            "pooling gradient does not match the recorded argmax",
        ));
    }
    for (i, am) in argmax.iter().enumerate() {
        let up = &dy.data()[i * per..(i + 1) * per];
        let out = &mut dx.data_mut()[i * img..(i + 1) * img];
        for (&idx, &g) in am.iter().zip(up) {
            out[idx] += g;
        }
    }
    Ok(dx)
}
