//! Experiment configs.
//!
//! A config is TOML with one level of tables:
//!
//! ```toml
//! seed = 7
//! output_dir = "runs/matrix"
//! train_fraction = 0.8
//!
//! [data]
//! source = "synthetic"      # or "manifest" with `path = "frames.txt"`
//! kind = "moving_square"
//! frames = 30
//!
//! [defaults]                # applied to every variant
//! epochs = 10
//! hidden = 8
//!
//! [sweep]
//! start = 5
//! end = 10
//!
//! [[variant]]
//! architecture = ["stack_lstm", "cnn_lstm", "conv_lstm"]
//! resolution = [32, 64]
//! loss = ["mae", "rmse"]
//! ```
//!
//! Variant keys are the [`ModelConfig`] field names. A list under
//! `architecture`, `resolution`, `loss` or `timestep` expands the block into
//! the cartesian product, in that nesting order. `hidden` takes one width for
//! every recurrent layer or a list with one width per layer.

use std::collections::BTreeSet;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use nextframe::data::SynthKind;
use nextframe::model::{Architecture, ModelConfig};
use toml::{Table, Value};

use crate::error::{BenchError, Result};

const EXPANDING: [&str; 4] = ["architecture", "resolution", "loss", "timestep"];

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic { kind: SynthKind, frames: usize },
    Manifest(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    pub model: ModelConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub variants: Vec<Variant>,
    pub sweep: Option<RangeInclusive<usize>>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub train_fraction: f64,
    /// The config text as read, copied into every run directory.
    pub source_text: String,
}

impl ExperimentConfig {
    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            BenchError::config(path.display().to_string(), format!("cannot read: {e}"))
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| BenchError::config("config", e.message()))?;
        for key in root.keys() {
            if ![
                "seed",
                "output_dir",
                "train_fraction",
                "data",
                "defaults",
                "sweep",
                "variant",
            ]
            .contains(&key.as_str())
            {
                return Err(BenchError::config(key.as_str(), "unknown key"));
            }
        }
        let seed = match root.get("seed") {
            None => 0,
            Some(v) => v
                .as_integer()
                .and_then(|i| u64::try_from(i).ok())
                .ok_or_else(|| BenchError::config("seed", "expected a non-negative integer"))?,
        };
        let output_dir = match root.get("output_dir") {
            None => PathBuf::from("runs"),
            Some(v) => PathBuf::from(
                v.as_str()
                    .ok_or_else(|| BenchError::config("output_dir", "expected a string"))?,
            ),
        };
        let train_fraction = match root.get("train_fraction") {
            None => 0.8,
            Some(v) => {
                let f = number(v).ok_or_else(|| {
                    BenchError::config("train_fraction", "expected a number")
                })?;
                if !(f > 0.0 && f < 1.0) {
                    return Err(BenchError::config("train_fraction", "must lie in (0, 1)"));
                }
                f
            }
        };
        let data = parse_data(table(&root, "data")?.ok_or_else(|| {
            BenchError::config("data", "missing [data] table")
        })?, base)?;
        let sweep = table(&root, "sweep")?.map(parse_sweep).transpose()?;
        let defaults = table(&root, "defaults")?.cloned().unwrap_or_default();
        if defaults.contains_key("name") {
            return Err(BenchError::config("defaults.name", "names belong to variants"));
        }
        let blocks = match root.get("variant") {
            None => return Err(BenchError::config("variant", "at least one [[variant]] is required")),
            Some(Value::Array(a)) => a,
            Some(_) => return Err(BenchError::config("variant", "expected [[variant]] blocks")),
        };
        if blocks.is_empty() {
            return Err(BenchError::config("variant", "at least one [[variant]] is required"));
        }
        let mut variants = Vec::new();
        for (i, block) in blocks.iter().enumerate() {
            let Value::Table(block) = block else {
                return Err(BenchError::config(format!("variant[{i}]"), "expected a table"));
            };
            variants.extend(expand(i, &defaults, block, seed)?);
        }
        let mut seen = BTreeSet::new();
        for v in &variants {
            if !seen.insert(v.name.as_str()) {
                return Err(BenchError::config(
                    "variant",
                    format!("duplicate variant name {:?}", v.name),
                ));
            }
        }
        Ok(ExperimentConfig {
            data,
            variants,
            sweep,
            output_dir: base.join(output_dir),
            seed,
            train_fraction,
            source_text: text.to_string(),
        })
    }
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Integer(i) => Some(*i as f64),
        Value::Float(f) => Some(*f),
        _ => None,
    }
}

fn table<'a>(root: &'a Table, key: &str) -> Result<Option<&'a Table>> {
    match root.get(key) {
        None => Ok(None),
        Some(Value::Table(t)) => Ok(Some(t)),
        Some(_) => Err(BenchError::config(key, "expected a table")),
    }
}

fn parse_data(t: &Table, base: &Path) -> Result<DataSource> {
    let text = |key: &str| -> Result<Option<&str>> {
        match t.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_str()
                .map(Some)
                .ok_or_else(|| BenchError::config(format!("data.{key}"), "expected a string")),
        }
    };
    let source = text("source")?.unwrap_or("synthetic");
    let allowed: &[&str] = match source {
        "synthetic" => &["source", "kind", "frames"],
        "manifest" => &["source", "path"],
        other => {
            return Err(BenchError::config(
                "data.source",
                format!("unknown source {other:?}, expected synthetic or manifest"),
            ))
        }
    };
    if let Some(k) = t.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(BenchError::config(
            format!("data.{k}"),
            format!("not a {source} data key"),
        ));
    }
    if source == "manifest" {
        let path = text("path")?
            .ok_or_else(|| BenchError::config("data.path", "manifest source needs a path"))?;
        return Ok(DataSource::Manifest(base.join(path)));
    }
    let kind = match text("kind")? {
        None => SynthKind::MovingSquare,
        Some(k) => SynthKind::parse(k).ok_or_else(|| {
            BenchError::config("data.kind", format!("unknown synthetic kind {k:?}"))
        })?,
    };
    let frames = match t.get("frames") {
        None => 30,
        Some(v) => v
            .as_integer()
            .filter(|&n| n > 0)
            .ok_or_else(|| BenchError::config("data.frames", "expected a positive integer"))?
            as usize,
    };
    Ok(DataSource::Synthetic { kind, frames })
}

fn parse_sweep(t: &Table) -> Result<RangeInclusive<usize>> {
    if let Some(k) = t.keys().find(|k| !["start", "end"].contains(&k.as_str())) {
        return Err(BenchError::config(format!("sweep.{k}"), "unknown key"));
    }
    let bound = |key: &str| -> Result<usize> {
        t.get(key)
            .ok_or_else(|| BenchError::config(format!("sweep.{key}"), "missing"))?
            .as_integer()
            .filter(|&n| n > 0)
            .map(|n| n as usize)
            .ok_or_else(|| BenchError::config(format!("sweep.{key}"), "expected a positive integer"))
    };
    let (start, end) = (bound("start")?, bound("end")?);
    if end < start {
        return Err(BenchError::config(
            "sweep.end",
            format!("range {start}..={end} is empty"),
        ));
    }
    Ok(start..=end)
}

/// Text form of a scalar value as [`ModelConfig::set`] expects it.
fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Integer(i) => Some(i.to_string()),
        Value::Float(f) => Some(f.to_string()),
        _ => None,
    }
}

fn expand(index: usize, defaults: &Table, block: &Table, seed: u64) -> Result<Vec<Variant>> {
    // Each key remembers where it came from for error messages.
    let mut merged: Vec<(String, String, &Value)> = Vec::new();
    for (k, v) in defaults {
        if !block.contains_key(k) {
            merged.push((k.clone(), format!("defaults.{k}"), v));
        }
    }
    for (k, v) in block {
        merged.push((k.clone(), format!("variant[{index}].{k}"), v));
    }

    let mut name = None;
    let mut axes: Vec<(&str, String, Vec<String>)> = Vec::new();
    let mut fixed: Vec<(String, String, &Value)> = Vec::new();
    for (k, path, v) in merged {
        if k == "name" {
            name = Some(
                v.as_str()
                    .ok_or_else(|| BenchError::config(&path, "expected a string"))?
                    .to_string(),
            );
        } else if let Some(axis) = EXPANDING.iter().find(|a| **a == k) {
            let values = match v {
                Value::Array(items) if items.is_empty() => {
                    return Err(BenchError::config(&path, "empty list"))
                }
                Value::Array(items) => items.iter().map(scalar_text).collect::<Option<Vec<_>>>(),
                v => scalar_text(v).map(|s| vec![s]),
            }
            .ok_or_else(|| BenchError::config(&path, "expected a scalar or a list of scalars"))?;
            axes.push((axis, path, values));
        } else {
            fixed.push((k, path, v));
        }
    }
    if !axes.iter().any(|(a, _, _)| *a == "architecture") {
        return Err(BenchError::config(
            format!("variant[{index}].architecture"),
            "missing",
        ));
    }
    axes.sort_by_key(|(a, _, _)| EXPANDING.iter().position(|e| e == a));

    let mut combos: Vec<Vec<(&str, &str, &str)>> = vec![Vec::new()];
    for (axis, path, values) in &axes {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push((*axis, path.as_str(), v.as_str()));
                    c
                })
            })
            .collect();
    }

    let multiple = combos.len() > 1;
    combos
        .into_iter()
        .map(|combo| {
            let (_, arch_path, arch) = combo[0];
            let arch: Architecture = arch
                .parse()
                .map_err(|e: nextframe::Error| BenchError::config(arch_path, e))?;
            let mut cfg = ModelConfig::new(arch);
            cfg.seed = seed;
            for (key, path, value) in &combo[1..] {
                cfg.set(key, value)
                    .map_err(|e| BenchError::config(*path, e))?;
            }
            for (key, path, value) in &fixed {
                match (key.as_str(), value) {
                    ("hidden", Value::Integer(w)) if *w > 0 => {
                        cfg = cfg.with_width(*w as usize);
                    }
                    ("hidden", Value::Array(items)) => {
                        let widths = items
                            .iter()
                            .map(|v| v.as_integer().map(|i| i.to_string()))
                            .collect::<Option<Vec<_>>>()
                            .ok_or_else(|| {
                                BenchError::config(path, "expected integer widths")
                            })?;
                        cfg.set(key, &widths.join(","))
                            .map_err(|e| BenchError::config(path, e))?;
                    }
                    _ => {
                        let text = scalar_text(value)
                            .ok_or_else(|| BenchError::config(path, "expected a scalar"))?;
                        cfg.set(key, &text).map_err(|e| BenchError::config(path, e))?;
                    }
                }
            }
            cfg.validate()
                .map_err(|e| BenchError::config(format!("variant[{index}]"), e))?;
            let auto = format!(
                "{}_r{}_{}_t{}",
                cfg.architecture, cfg.resolution, cfg.loss, cfg.timestep
            );
            let name = match &name {
                None => auto,
                Some(n) if multiple => format!("{n}_{auto}"),
                Some(n) => n.clone(),
            };
            if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
                return Err(BenchError::config(
                    format!("variant[{index}].name"),
                    format!("{name:?} is not usable as a directory name"),
                ));
            }
            Ok(Variant { name, model: cfg })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("/base"))
    }

    const MATRIX: &str = r#"
seed = 3
[data]
kind = "moving_square"
frames = 12
[defaults]
epochs = 2
hidden = 4
[[variant]]
architecture = ["stack_lstm", "cnn_lstm", "conv_lstm"]
resolution = [32, 64]
loss = ["mae", "rmse"]
"#;

    #[test]
    fn matrix_expands_to_twelve() {
        let c = parse(MATRIX).unwrap();
        assert_eq!(c.variants.len(), 12);
        assert_eq!(c.variants[0].name, "stack_lstm_r32_mae_t5");
        assert_eq!(c.variants[1].name, "stack_lstm_r32_rmse_t5");
        assert_eq!(c.variants[11].name, "conv_lstm_r64_rmse_t5");
        assert!(c.variants.iter().all(|v| v.model.epochs == 2 && v.model.seed == 3));
        assert_eq!(c.variants[4].model.hidden, vec![4, 4]);
        assert_eq!(c.output_dir, Path::new("/base/runs"));
        assert_eq!(
            c.data,
            DataSource::Synthetic {
                kind: SynthKind::MovingSquare,
                frames: 12
            }
        );
    }

    #[test]
    fn errors_carry_field_paths() {
        let bad = MATRIX.replace("loss = [\"mae\", \"rmse\"]", "loss = \"mae\"\nepochs = \"ten\"");
        let e = parse(&bad).unwrap_err();
        assert!(e.to_string().starts_with("variant[0].epochs:"), "{e}");

        let bad = format!("{MATRIX}\n[[variant]]\narchitecture = \"gru\"\n");
        let e = parse(&bad).unwrap_err();
        assert!(e.to_string().starts_with("variant[1].architecture:"), "{e}");
        assert_eq!(e.exit_code(), 1);

        let bad = MATRIX.replace("epochs = 2", "epochs = 2\nbogus = 1");
        let e = parse(&bad).unwrap_err();
        assert!(e.to_string().starts_with("defaults.bogus:"), "{e}");
    }

    #[test]
    fn sweep_and_manifest() {
        let text = r#"
[data]
source = "manifest"
path = "frames/list.txt"
[sweep]
start = 5
end = 10
[[variant]]
name = "conv"
architecture = "conv_lstm"
hidden = [3, 4, 5]
"#;
        let c = parse(text).unwrap();
        assert_eq!(c.sweep, Some(5..=10));
        assert_eq!(c.data, DataSource::Manifest("/base/frames/list.txt".into()));
        assert_eq!(c.variants[0].name, "conv");
        assert_eq!(c.variants[0].model.hidden, vec![3, 4, 5]);

        let e = parse(&text.replace("end = 10", "end = 4")).unwrap_err();
        assert!(e.to_string().starts_with("sweep.end:"), "{e}");
    }

    #[test]
    fn missing_pieces() {
        assert!(parse("[data]\n").unwrap_err().to_string().starts_with("variant:"));
        let e = parse("[[variant]]\narchitecture = \"conv_lstm\"\n").unwrap_err();
        assert!(e.to_string().starts_with("data:"), "{e}");
        let e = parse("[data]\n[[variant]]\nname = \"x\"\nhidden = [1, 2]\narchitecture = \"conv_lstm\"\n")
            .unwrap_err();
        assert!(e.to_string().starts_with("variant[0]:"), "{e}");
    }

    #[test]
    fn duplicate_names_rejected() {
        let text = "[data]\n[[variant]]\narchitecture = \"conv_lstm\"\n[[variant]]\narchitecture = \"conv_lstm\"\n";
        assert!(parse(text).unwrap_err().to_string().contains("duplicate"));
    }
}
