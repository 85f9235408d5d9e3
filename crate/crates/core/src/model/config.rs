use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::optim::AdamConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Architecture {
    StackLstm,
    CnnLstm,
    ConvLstm,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [
        Architecture::StackLstm,
        Architecture::CnnLstm,
        Architecture::ConvLstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::StackLstm => "stack_lstm",
            Architecture::CnnLstm => "cnn_lstm",
            Architecture::ConvLstm => "conv_lstm",
        }
    }

    pub fn recurrent_layers(self) -> usize {
        match self {
            Architecture::CnnLstm => 2,
            _ => 3,
        }
    }

    /// LSTM width for the fully connected variants, channel count for ConvLSTM.
    pub fn default_hidden(self) -> usize {
        match self {
            Architecture::ConvLstm => 16,
            _ => 256,
        }
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown architecture {s:?} (expected stack_lstm, cnn_lstm or conv_lstm)"
                ))
            })
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub timestep: usize,
    /// Frames are `resolution × resolution`.
    pub resolution: usize,
    pub loss: LossKind,
    pub epochs: usize,
    /// One width per recurrent layer.
    pub hidden: Vec<usize>,
    /// Filters of the CNN stage (cnn_lstm only).
    pub conv_filters: usize,
    /// Spatial kernel of the convolutional stages.
    pub kernel: usize,
    pub dropout: f64,
    /// `None` trains full batch.
    pub batch_size: Option<usize>,
    pub adam: AdamConfig,
    pub forget_bias: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(architecture: Architecture) -> Self {
        ModelConfig {
            architecture,
            timestep: 5,
            resolution: 64,
            loss: LossKind::Mae,
            epochs: 100,
            hidden: vec![architecture.default_hidden(); architecture.recurrent_layers()],
            conv_filters: 16,
            kernel: 3,
            dropout: 0.2,
            batch_size: None,
            adam: AdamConfig::default(),
            forget_bias: 1.0,
            seed: 0,
        }
    }

    /// Sets every recurrent layer to the same width.
    pub fn with_width(mut self, width: usize) -> Self {
        self.hidden = vec![width; self.architecture.recurrent_layers()];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let arch = self.architecture;
        if self.timestep == 0 {
            return Err(Error::invalid("timestep must be at least 1"));
        }
        if self.resolution == 0 {
            return Err(Error::invalid("resolution must be positive"));
        }
        if arch == Architecture::CnnLstm && !self.resolution.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "cnn_lstm pools by 2 and needs an even resolution, got {}",
                self.resolution
            )));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.hidden.len() != arch.recurrent_layers() {
            return Err(Error::invalid(format!(
                "{arch} has {} recurrent layers but {} hidden sizes were given",
                arch.recurrent_layers(),
                self.hidden.len()
            )));
        }
        if self.hidden.contains(&0) || self.conv_filters == 0 {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "kernel size {} must be odd",
                self.kernel
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !self.forget_bias.is_finite() {
            return Err(Error::invalid("forget bias must be finite"));
        }
        self.adam.validate()
    }

    /// `key = value` lines that [`ModelConfig::from_echo`] parses back.
    pub fn echo(&self) -> String {
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        let batch = self
            .batch_size
            .map_or("full".to_string(), |b| b.to_string());
        let pairs = [
            ("architecture", self.architecture.to_string()),
            ("timestep", self.timestep.to_string()),
            ("resolution", self.resolution.to_string()),
            ("loss", self.loss.to_string()),
            ("epochs", self.epochs.to_string()),
            ("hidden", hidden.join(",")),
            ("conv_filters", self.conv_filters.to_string()),
            ("kernel", self.kernel.to_string()),
            ("dropout", self.dropout.to_string()),
            ("batch_size", batch),
            ("learning_rate", self.adam.learning_rate.to_string()),
            ("beta1", self.adam.beta1.to_string()),
            ("beta2", self.adam.beta2.to_string()),
            ("epsilon", self.adam.epsilon.to_string()),
            ("forget_bias", self.forget_bias.to_string()),
            ("seed", self.seed.to_string()),
        ];
        pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn from_echo(text: &str) -> Result<Self> {
        let mut arch = None;
        let mut rest = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("config line {}: expected key = value", n + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k == "architecture" {
                arch = Some(v.parse::<Architecture>()?);
            } else {
                rest.push((k.to_string(), v.to_string()));
            }
        }
        let arch = arch.ok_or_else(|| Error::invalid("config echo lacks an architecture"))?;
        let mut cfg = ModelConfig::new(arch);
        for (k, v) in rest {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Assigns one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<V: FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .parse()
                .map_err(|_| Error::invalid(format!("{key}: cannot parse {value:?}")))
        }
        match key {
            "architecture" => self.architecture = value.parse()?,
            "timestep" => self.timestep = num(key, value)?,
            "resolution" => self.resolution = num(key, value)?,
            "loss" => {
                self.loss = LossKind::parse(value)
                    .ok_or_else(|| Error::invalid(format!("loss: unknown kind {value:?}")))?
            }
            "epochs" => self.epochs = num(key, value)?,
            "hidden" => {
                self.hidden = value
                    .split(',')
                    .map(|s| num(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "conv_filters" => self.conv_filters = num(key, value)?,
            "kernel" => self.kernel = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "batch_size" => {
                self.batch_size = match value {
                    "full" => None,
                    v => Some(num(key, v)?),
                }
            }
            "learning_rate" => self.adam.learning_rate = num(key, value)?,
            "beta1" => self.adam.beta1 = num(key, value)?,
            "beta2" => self.adam.beta2 = num(key, value)?,
            "epsilon" => self.adam.epsilon = num(key, value)?,
            "forget_bias" => self.forget_bias = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            other => return Err(Error::invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ModelConfig::new(Architecture::StackLstm);
        assert_eq!((c.timestep, c.epochs, c.resolution), (5, 100, 64));
        assert_eq!(c.hidden, vec![256; 3]);
        assert_eq!(ModelConfig::new(Architecture::CnnLstm).hidden, vec![256; 2]);
        assert_eq!(ModelConfig::new(Architecture::ConvLstm).hidden, vec![16; 3]);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_architecture() {
        assert!("gru".parse::<Architecture>().is_err());
        assert_eq!(
            "cnn_lstm".parse::<Architecture>().unwrap(),
            Architecture::CnnLstm
        );
    }

    #[test]
    fn echo_roundtrip() {
        let mut c = ModelConfig::new(Architecture::ConvLstm).with_width(5);
        c.loss = LossKind::Rmse;
        c.batch_size = Some(7);
        c.adam.learning_rate = 3.3e-4;
        c.dropout = 0.15;
        c.seed = 99;
        assert_eq!(ModelConfig::from_echo(&c.echo()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = ModelConfig::new(Architecture::CnnLstm);
        c.resolution = 15;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::new(Architecture::StackLstm);
        c.hidden = vec![4, 4];
        assert!(c.validate().is_err());
        c = ModelConfig::new(Architecture::StackLstm);
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        assert!(c.set("colour", "blue").is_err());
        assert!(c.set("epochs", "many").is_err());
    }
}
