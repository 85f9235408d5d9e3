use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layer::{Cache, Layer};
use super::{Architecture, ModelConfig};
use crate::cells::{ConvLstmParams, LstmParams};
use crate::error::{Error, Result};
use crate::layers::{glorot_init, Activation, BatchNormParams, DenseParams, Mode};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Ordered layers plus the configuration that produced them.
#[derive(Clone, Debug)]
pub struct Model<T> {
    config: ModelConfig,
    layers: Vec<Layer<T>>,
    mode: Mode,
    rng: ChaCha8Rng,
}

/// Per-layer caches of one train-mode forward pass.
#[derive(Debug)]
pub struct Tape<T> {
    caches: Vec<Cache<T>>,
}

pub fn build_model<T: Scalar>(cfg: &ModelConfig) -> Result<Model<T>> {
    Model::new(cfg.clone())
}

/// Dropout draws come from their own stream so rebuilding a model from a
/// checkpoint replays the same masks.
fn dropout_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = match config.architecture {
            Architecture::StackLstm => stack_lstm(&config, &mut rng)?,
            Architecture::CnnLstm => cnn_lstm(&config, &mut rng)?,
            Architecture::ConvLstm => conv_lstm(&config, &mut rng)?,
        };
        Ok(Model {
            rng: dropout_rng(config.seed),
            config,
            layers,
            mode: Mode::Eval,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Number of layers of the given [`Layer::kind`].
    pub fn count(&self, kind: &str) -> usize {
        self.layers.iter().filter(|l| l.kind() == kind).count()
    }

    /// Names like `03.lstm.w`, aligned with [`Model::parameters`].
    pub fn parameter_names(&self) -> Vec<String> {
        self.named(|l| l.params())
    }

    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .map(|(_, t)| t)
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Parameters followed by batchnorm running statistics, with names.
    pub fn state(&self) -> Vec<(String, &Tensor<T>)> {
        let names = self
            .named(|l| l.params())
            .into_iter()
            .chain(self.named(|l| l.buffers()));
        let tensors = self
            .layers
            .iter()
            .flat_map(|l| l.params())
            .chain(self.layers.iter().flat_map(|l| l.buffers()))
            .map(|(_, t)| t);
        names.zip(tensors).collect()
    }

    pub fn state_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let names: Vec<String> = self
            .named(|l| l.params())
            .into_iter()
            .chain(self.named(|l| l.buffers()))
            .collect();
        let mut params = Vec::new();
        let mut buffers = Vec::new();
        for l in self.layers.iter_mut() {
            let kind = l.kind();
            if kind == "batchnorm" {
                // Split borrows of the same layer.
                let Layer::BatchNorm { params: p, .. } = l else {
                    unreachable!()
                };
                params.push(&mut p.gamma);
                params.push(&mut p.beta);
                buffers.push(&mut p.running_mean);
                buffers.push(&mut p.running_var);
            } else {
                params.extend(l.params_mut());
            }
        }
        names
            .into_iter()
            .zip(params.into_iter().chain(buffers))
            .collect()
    }

    fn named<'a, F>(&'a self, f: F) -> Vec<String>
    where
        F: Fn(&'a Layer<T>) -> Vec<(&'static str, &'a Tensor<T>)>,
    {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            for (n, _) in f(l) {
                out.push(format!("{i:02}.{}.{n}", l.kind()));
            }
        }
        out
    }

    fn check_batch(&self, x: &Tensor<T>) -> Result<()> {
        let (t, r) = (self.config.timestep, self.config.resolution);
        if x.rank() != 5 || x.dims()[1..] != [t, r, r, 1] {
            return Err(Error::shape(format!(
                "input {:?}, expected [batch, {t}, {r}, {r}, 1]",
                x.dims()
            )));
        }
        Ok(())
    }

    /// Eval-mode prediction for a batch `[B, T, H, W, 1]` → `[B, H, W, 1]`.
    /// Never changes the model.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_batch(x)?;
        let mut y = x.clone();
        for l in &self.layers {
            y = l.forward_eval(&y)?;
        }
        Ok(y)
    }

    /// Train-mode pass: dropout draws from `rng` and batchnorm updates its
    /// running statistics.
    pub fn forward_train<R: Rng>(
        &mut self,
        x: &Tensor<T>,
        rng: &mut R,
    ) -> Result<(Tensor<T>, Tape<T>)> {
        self.check_batch(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut y = x.clone();
        for l in self.layers.iter_mut() {
            let (next, cache) = l.forward_train(&y, rng)?;
            caches.push(cache);
            y = next;
        }
        Ok((y, Tape { caches }))
    }

    /// Gradients of every parameter, aligned with [`Model::parameters`],
    /// given the upstream gradient on the output of `tape`'s pass.
    pub fn backward(&self, tape: &Tape<T>, dy: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        if tape.caches.len() != self.layers.len() {
            return Err(Error::invalid("tape was recorded by a different model"));
        }
        let mut per_layer = Vec::with_capacity(self.layers.len());
        let mut g = dy.clone();
        for (l, c) in self.layers.iter().zip(&tape.caches).rev() {
            let (dx, grads) = l.backward(c, &g)?;
            per_layer.push(grads);
            g = dx;
        }
        Ok(per_layer.into_iter().rev().flatten().collect())
    }

    /// Train mode uses the model's own dropout stream.
    pub(crate) fn train_step_forward(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, Tape<T>)> {
        let mut rng = self.rng.clone();
        let out = self.forward_train(x, &mut rng);
        self.rng = rng;
        out
    }
}

/// Runs one window `[T, H, W, 1]` (or a batch `[B, T, H, W, 1]`) through
/// the model. Train mode draws dropout masks and updates batchnorm
/// statistics, which requires a batch of at least two windows.
pub fn model_forward<T: Scalar>(
    m: &mut Model<T>,
    window: &Tensor<T>,
    mode: Mode,
) -> Result<Tensor<T>> {
    let single = window.rank() == 4;
    let batch = if single {
        let mut dims = vec![1];
        dims.extend_from_slice(window.dims());
        window.reshape(&dims)?
    } else {
        window.clone()
    };
    let y = match mode {
        Mode::Eval => m.predict(&batch)?,
        Mode::Train => m.train_step_forward(&batch)?.0,
    };
    if single {
        let dims = y.dims()[1..].to_vec();
        y.into_reshaped(&dims)
    } else {
        Ok(y)
    }
}

fn bn_dropout<T: Scalar>(
    layers: &mut Vec<Layer<T>>,
    channels: usize,
    lead: usize,
    rate: f64,
) -> Result<()> {
    layers.push(Layer::BatchNorm {
        params: BatchNormParams::new(channels)?,
        lead,
    });
    layers.push(Layer::Dropout { rate });
    Ok(())
}

fn head<T: Scalar, R: Rng>(
    layers: &mut Vec<Layer<T>>,
    input: usize,
    res: usize,
    rng: &mut R,
) -> Result<()> {
    layers.push(Layer::Dense(DenseParams::init(
        input,
        res * res,
        Activation::Sigmoid,
        rng,
    )?));
    layers.push(Layer::Reshape {
        keep: 1,
        tail: vec![res, res, 1],
    });
    Ok(())
}

fn stack_lstm<T: Scalar, R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Result<Vec<Layer<T>>> {
    let res = cfg.resolution;
    let fb = T::from_f64(cfg.forget_bias);
    let mut layers = vec![Layer::Reshape {
        keep: 2,
        tail: vec![res * res],
    }];
    let mut input = res * res;
    let n = cfg.hidden.len();
    for (i, &h) in cfg.hidden.iter().enumerate() {
        let sequences = i + 1 < n;
        layers.push(Layer::Lstm {
            cell: LstmParams::init(input, h, fb, rng)?,
            sequences,
        });
        bn_dropout(&mut layers, h, if sequences { 2 } else { 1 }, cfg.dropout)?;
        input = h;
    }
    head(&mut layers, input, res, rng)?;
    Ok(layers)
}

fn cnn_lstm<T: Scalar, R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Result<Vec<Layer<T>>> {
    let (res, f, k) = (cfg.resolution, cfg.conv_filters, cfg.kernel);
    let fb = T::from_f64(cfg.forget_bias);
    let mut layers = vec![
        Layer::Reshape {
            keep: 2,
            tail: vec![1, res, res],
        },
        Layer::Conv2d {
            kernels: glorot_init(&[f, 1, k, k], rng)?,
            bias: Tensor::zeros(&[f])?,
            activation: Activation::Relu,
        },
        Layer::MaxPool,
        Layer::Reshape {
            keep: 2,
            tail: vec![f * (res / 2) * (res / 2)],
        },
    ];
    let mut input = f * (res / 2) * (res / 2);
    let n = cfg.hidden.len();
    for (i, &h) in cfg.hidden.iter().enumerate() {
        layers.push(Layer::Lstm {
            cell: LstmParams::init(input, h, fb, rng)?,
            sequences: i + 1 < n,
        });
        input = h;
    }
    head(&mut layers, input, res, rng)?;
    Ok(layers)
}

fn conv_lstm<T: Scalar, R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Result<Vec<Layer<T>>> {
    let res = cfg.resolution;
    let fb = T::from_f64(cfg.forget_bias);
    let mut layers = vec![Layer::Reshape {
        keep: 2,
        tail: vec![1, res, res],
    }];
    let mut input = 1;
    let n = cfg.hidden.len();
    for (i, &h) in cfg.hidden.iter().enumerate() {
        let sequences = i + 1 < n;
        layers.push(Layer::ConvLstm {
            cell: ConvLstmParams::init(input, h, cfg.kernel, fb, rng)?,
            sequences,
        });
        bn_dropout(&mut layers, h, if sequences { 2 } else { 1 }, cfg.dropout)?;
        input = h;
    }
    layers.push(Layer::Conv2d {
        kernels: glorot_init(&[1, input, 1, 1], rng)?,
        bias: Tensor::zeros(&[1])?,
        activation: Activation::Sigmoid,
    });
    layers.push(Layer::Reshape {
        keep: 1,
        tail: vec![res, res, 1],
    });
    Ok(layers)
}
