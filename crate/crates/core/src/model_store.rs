//! Versioned text persistence for trained models (`.ssam` files).
//!
//! Layout:
//!
//! ```text
//! stockcast-model
//! format_version = 1
//! [config]
//! architecture = lstm-ssam
//! ...
//! [training]
//! feature = Adj Close
//! ...
//! [scaler]
//! min = 1.8567880249023438e2
//! max = 4.9876998901367188e2
//! [tensor lstm.forget.W 1 50]
//! <one matrix row per line, space separated>
//! ...
//! [end]
//! ```
//!
//! Floats are written with 17 significant digits so every `f64` reads back
//! bit-for-bit. A missing `[end]` marker means the file was truncated.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::Feature;
use crate::model::{ModelConfig, ModelParams};
use crate::preprocess::{ScalerFit, ScalerParams};
use crate::training::{AdamHyper, TrainConfig};

pub const FORMAT_VERSION: u32 = 1;
pub const FILE_EXTENSION: &str = "ssam";
const MAGIC: &str = "stockcast-model";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// How the bundled model was trained; enough to rebuild its data split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub feature: Feature,
    pub split_ratio: f64,
    pub scaler_fit: ScalerFit,
    pub train: TrainConfig,
    /// Length of the training partition the model saw.
    pub train_rows: usize,
    pub last_train_date: Option<NaiveDate>,
}

impl Default for TrainSummary {
    fn default() -> Self {
        Self {
            feature: Feature::AdjClose,
            split_ratio: 0.9,
            scaler_fit: ScalerFit::Train,
            train: TrainConfig::default(),
            train_rows: 0,
            last_train_date: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub format_version: u32,
    pub model_config: ModelConfig,
    pub train_summary: TrainSummary,
    pub scaler: ScalerParams,
    pub tensors: Vec<NamedTensor>,
}

impl ModelBundle {
    pub fn from_params(params: &ModelParams, scaler: ScalerParams, train_summary: TrainSummary) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            model_config: params.config.clone(),
            train_summary,
            scaler,
            tensors: params
                .tensors()
                .into_iter()
                .map(|(name, m)| NamedTensor {
                    name: name.to_string(),
                    rows: m.rows(),
                    cols: m.cols(),
                    values: m.values().to_vec(),
                })
                .collect(),
        }
    }

    /// Checks version and that tensors match the config exactly.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(self.format_version));
        }
        self.model_config.validate()?;
        ScalerParams::new(self.scaler.min(), self.scaler.max())?;
        let expected = ModelParams::expected_shapes(&self.model_config)?;
        for (name, shape) in &expected {
            let t = self
                .tensors
                .iter()
                .find(|t| t.name == *name)
                .ok_or_else(|| Error::InvalidBundle(format!("missing tensor {name}")))?;
            if (t.rows, t.cols) != *shape {
                return Err(Error::InvalidBundle(format!(
                    "tensor {name} has shape {}x{}, config requires {}x{}",
                    t.rows, t.cols, shape.0, shape.1
                )));
            }
            if t.values.len() != t.rows * t.cols {
                return Err(Error::InvalidBundle(format!(
                    "tensor {name} holds {} values",
                    t.values.len()
                )));
            }
            if t.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidBundle(format!("tensor {name} has non-finite values")));
            }
        }
        if let Some(extra) = self
            .tensors
            .iter()
            .find(|t| !expected.iter().any(|(n, _)| *n == t.name))
        {
            return Err(Error::InvalidBundle(format!("unexpected tensor {}", extra.name)));
        }
        if self.tensors.len() != expected.len() {
            return Err(Error::InvalidBundle("duplicate tensors".into()));
        }
        Ok(())
    }

    pub fn to_params(&self) -> Result<ModelParams> {
        self.validate()?;
        let mut params = ModelParams::zeros(&self.model_config)?;
        for (name, m) in params.tensors_mut() {
            let t = self.tensors.iter().find(|t| t.name == name).expect("validated above");
            m.values_mut().copy_from_slice(&t.values);
        }
        Ok(params)
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.values.len()).sum()
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn render(bundle: &ModelBundle) -> String {
    let c = &bundle.model_config;
    let s = &bundle.train_summary;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "format_version = {}", bundle.format_version);
    let _ = writeln!(out, "[config]");
    for (k, v) in [
        ("architecture", c.architecture.to_string()),
        ("input_dim", c.input_dim.to_string()),
        ("hidden_units", c.hidden_units.to_string()),
        ("time_step", c.time_step.to_string()),
        ("attention_dim", c.attention_dim.to_string()),
        ("post_attention_activation", c.post_attention_activation.to_string()),
        ("seed", c.seed.to_string()),
    ] {
        let _ = writeln!(out, "{k} = {v}");
    }
    let _ = writeln!(out, "[training]");
    for (k, v) in [
        ("feature", s.feature.to_string()),
        ("split_ratio", fmt_f64(s.split_ratio)),
        ("scaler_fit", s.scaler_fit.to_string()),
        ("batch_size", s.train.batch_size.to_string()),
        ("epochs", s.train.epochs.to_string()),
        ("shuffle", s.train.shuffle.to_string()),
        ("shuffle_seed", s.train.shuffle_seed.to_string()),
        ("learning_rate", fmt_f64(s.train.hyper.alpha)),
        ("beta1", fmt_f64(s.train.hyper.beta1)),
        ("beta2", fmt_f64(s.train.hyper.beta2)),
        ("epsilon", fmt_f64(s.train.hyper.epsilon)),
        ("train_rows", s.train_rows.to_string()),
        (
            "last_train_date",
            s.last_train_date.map_or_else(|| "none".to_string(), |d| d.to_string()),
        ),
    ] {
        let _ = writeln!(out, "{k} = {v}");
    }
    let _ = writeln!(out, "[scaler]");
    let _ = writeln!(out, "min = {}", fmt_f64(bundle.scaler.min()));
    let _ = writeln!(out, "max = {}", fmt_f64(bundle.scaler.max()));
    for t in &bundle.tensors {
        let _ = writeln!(out, "[tensor {} {} {}]", t.name, t.rows, t.cols);
        for row in t.values.chunks(t.cols.max(1)) {
            let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    let _ = writeln!(out, "[end]");
    out
}

/// Validates, then writes the whole document. Nothing is written if validation fails.
pub fn save(bundle: &ModelBundle, mut sink: impl Write) -> Result<()> {
    bundle.validate()?;
    sink.write_all(render(bundle).as_bytes())?;
    sink.flush()?;
    Ok(())
}

pub fn save_to_string(bundle: &ModelBundle) -> Result<String> {
    bundle.validate()?;
    Ok(render(bundle))
}

pub fn load(mut source: impl Read) -> Result<ModelBundle> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    parse(&text)
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<(usize, &'a str)> {
        self.inner.next().map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
    }

    fn peek_is_header(&mut self) -> bool {
        self.inner.peek().is_none_or(|(_, l)| l.starts_with('['))
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.next().ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("truncated: expected {what}"),
        })
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse::<T>()
        .map_err(|_| parse_err(line, format!("bad value `{raw}` for {key}")))
}

// Reads `key = value` lines up to the next section header.
fn section<'a>(lines: &mut Lines<'a>, name: &str) -> Result<Vec<(usize, &'a str, &'a str)>> {
    let (n, header) = lines.expect(&format!("[{name}]"))?;
    if header != format!("[{name}]") {
        return Err(parse_err(n, format!("expected [{name}], found `{header}`")));
    }
    let mut out = Vec::new();
    while !lines.peek_is_header() {
        let (n, l) = lines.next().expect("peeked");
        let (k, v) = l
            .split_once(" = ")
            .ok_or_else(|| parse_err(n, format!("expected `key = value`, found `{l}`")))?;
        out.push((n, k.trim(), v.trim()));
    }
    Ok(out)
}

fn lookup<T: FromStr>(entries: &[(usize, &str, &str)], key: &str, section: &str) -> Result<T> {
    let (n, k, v) = entries
        .iter()
        .find(|(_, k, _)| *k == key)
        .ok_or_else(|| parse_err(0, format!("[{section}] is missing `{key}`")))?;
    value(*n, k, v)
}

fn parse(text: &str) -> Result<ModelBundle> {
    let mut lines = Lines {
        inner: text.lines().enumerate().peekable(),
    };
    let (n, magic) = lines.expect("file header")?;
    if magic != MAGIC {
        return Err(parse_err(n, format!("not a model file (header `{magic}`)")));
    }
    let (n, version_line) = lines.expect("format_version")?;
    let version: u32 = match version_line.split_once(" = ") {
        Some(("format_version", v)) => value(n, "format_version", v)?,
        _ => return Err(parse_err(n, "expected `format_version = N`")),
    };
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }

    let cfg = section(&mut lines, "config")?;
    let model_config = ModelConfig {
        architecture: lookup(&cfg, "architecture", "config")?,
        input_dim: lookup(&cfg, "input_dim", "config")?,
        hidden_units: lookup(&cfg, "hidden_units", "config")?,
        time_step: lookup(&cfg, "time_step", "config")?,
        attention_dim: lookup(&cfg, "attention_dim", "config")?,
        post_attention_activation: lookup(&cfg, "post_attention_activation", "config")?,
        seed: lookup(&cfg, "seed", "config")?,
    };

    let tr = section(&mut lines, "training")?;
    let last_train_date: String = lookup(&tr, "last_train_date", "training")?;
    let train_summary = TrainSummary {
        feature: lookup(&tr, "feature", "training")?,
        split_ratio: lookup(&tr, "split_ratio", "training")?,
        scaler_fit: lookup(&tr, "scaler_fit", "training")?,
        train: TrainConfig {
            batch_size: lookup(&tr, "batch_size", "training")?,
            epochs: lookup(&tr, "epochs", "training")?,
            shuffle: lookup(&tr, "shuffle", "training")?,
            shuffle_seed: lookup(&tr, "shuffle_seed", "training")?,
            hyper: AdamHyper {
                alpha: lookup(&tr, "learning_rate", "training")?,
                beta1: lookup(&tr, "beta1", "training")?,
                beta2: lookup(&tr, "beta2", "training")?,
                epsilon: lookup(&tr, "epsilon", "training")?,
            },
        },
        train_rows: lookup(&tr, "train_rows", "training")?,
        last_train_date: match last_train_date.as_str() {
            "none" => None,
            d => Some(value(0, "last_train_date", d)?),
        },
    };

    let sc = section(&mut lines, "scaler")?;
    let scaler = ScalerParams::new(lookup(&sc, "min", "scaler")?, lookup(&sc, "max", "scaler")?)
        .map_err(|e| Error::Corrupt(format!("scaler: {e}")))?;

    let mut tensors = Vec::new();
    loop {
        let (n, header) = lines.expect("[tensor ...] or [end]")?;
        if header == "[end]" {
            break;
        }
        let spec = header
            .strip_prefix("[tensor ")
            .and_then(|h| h.strip_suffix(']'))
            .ok_or_else(|| parse_err(n, format!("expected tensor header, found `{header}`")))?;
        let parts: Vec<&str> = spec.split_whitespace().collect();
        let [name, rows, cols] = parts[..] else {
            return Err(parse_err(n, format!("malformed tensor header `{header}`")));
        };
        let rows: usize = value(n, "rows", rows)?;
        let cols: usize = value(n, "cols", cols)?;
        let mut values = Vec::with_capacity(rows * cols);
        while !lines.peek_is_header() {
            let (m, l) = lines.next().expect("peeked");
            for tok in l.split_whitespace() {
                values.push(value::<f64>(m, name, tok)?);
            }
        }
        if values.len() != rows * cols {
            return Err(Error::Corrupt(format!(
                "tensor {name} declares {rows}x{cols} but holds {} values",
                values.len()
            )));
        }
        tensors.push(NamedTensor {
            name: name.to_string(),
            rows,
            cols,
            values,
        });
    }

    let bundle = ModelBundle {
        format_version: version,
        model_config,
        train_summary,
        scaler,
        tensors,
    };
    bundle.validate().map_err(|e| match e {
        Error::InvalidBundle(msg) => Error::Corrupt(msg),
        other => other,
    })?;
    Ok(bundle)
}
