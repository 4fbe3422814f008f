//! Flat `key = value` run configuration files.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use bpt_core::graph::Mode;
use bpt_core::model::{Precision, RunConfig};

use crate::error::{HarnessError, Result};

const KEYS: &[&str] = &[
    "n_max",
    "k",
    "layers",
    "d_model",
    "heads",
    "d_ff",
    "mode",
    "vocab_size",
    "num_classes",
    "dropout_input",
    "dropout_hidden",
    "dropout_attention",
    "dropout_classifier",
    "seed",
    "precision",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "warmup_steps",
    "steps",
    "batch_size",
    "log_every",
    "valid_fraction",
    "test_fraction",
];

fn parse<T: FromStr>(value: &str, line: usize, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| HarnessError::Config { line, message: format!("bad value {value:?} for {key}: {e}") })
}

fn set(cfg: &mut RunConfig, key: &str, value: &str, line: usize) -> Result<()> {
    match key {
        "n_max" => cfg.n_max = parse(value, line, key)?,
        "k" => cfg.k = parse(value, line, key)?,
        "layers" => cfg.layers = parse(value, line, key)?,
        "d_model" => cfg.d_model = parse(value, line, key)?,
        "heads" => cfg.heads = parse(value, line, key)?,
        "d_ff" => cfg.d_ff = parse(value, line, key)?,
        "mode" => cfg.mode = parse::<Mode>(value, line, key)?,
        "vocab_size" => cfg.vocab_size = parse(value, line, key)?,
        "num_classes" => cfg.num_classes = parse(value, line, key)?,
        "dropout_input" => cfg.dropout.input = parse(value, line, key)?,
        "dropout_hidden" => cfg.dropout.hidden = parse(value, line, key)?,
        "dropout_attention" => cfg.dropout.attention = parse(value, line, key)?,
        "dropout_classifier" => cfg.dropout.classifier = parse(value, line, key)?,
        "seed" => cfg.seed = parse(value, line, key)?,
        "precision" => cfg.precision = parse::<Precision>(value, line, key)?,
        "lr" => cfg.optimizer.lr = parse(value, line, key)?,
        "beta1" => cfg.optimizer.beta1 = parse(value, line, key)?,
        "beta2" => cfg.optimizer.beta2 = parse(value, line, key)?,
        "eps" => cfg.optimizer.eps = parse(value, line, key)?,
        "warmup_steps" => cfg.optimizer.warmup_steps = parse(value, line, key)?,
        "steps" => cfg.steps = parse(value, line, key)?,
        "batch_size" => cfg.batch_size = parse(value, line, key)?,
        "log_every" => cfg.log_every = parse(value, line, key)?,
        "valid_fraction" => cfg.valid_fraction = parse(value, line, key)?,
        "test_fraction" => cfg.test_fraction = parse(value, line, key)?,
        _ => {
            return Err(HarnessError::Config { line, message: format!("unknown key {key:?}") });
        }
    }
    Ok(())
}

/// Parses config text on top of `base`. Later lines override earlier ones.
pub fn parse_config(text: &str, base: RunConfig) -> Result<RunConfig> {
    let mut cfg = base;
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| HarnessError::Config {
            line,
            message: format!("expected `key = value`, found {content:?}"),
        })?;
        set(&mut cfg, key.trim(), value.trim(), line)?;
        last_line = line;
        if key.trim() == "k" && cfg.k == 0 {
            return Err(HarnessError::Config { line, message: "k must be at least 1".into() });
        }
    }
    cfg.validate().map_err(|e| HarnessError::Config { line: last_line, message: e.to_string() })?;
    Ok(cfg)
}

pub fn load_config_with(path: &Path, base: RunConfig) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_config(&text, base)
}

/// Language-model defaults overridden by the file at `path`.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    load_config_with(path, RunConfig::default())
}

/// Every key, one per line, in a form [`parse_config`] reads back exactly.
pub fn config_to_string(cfg: &RunConfig) -> String {
    let o = &cfg.optimizer;
    let d = &cfg.dropout;
    let mode = match cfg.mode {
        Mode::Causal => "causal",
        Mode::Bidirectional => "bi",
    };
    let values: [String; 25] = [
        cfg.n_max.to_string(),
        cfg.k.to_string(),
        cfg.layers.to_string(),
        cfg.d_model.to_string(),
        cfg.heads.to_string(),
        cfg.d_ff.to_string(),
        mode.to_string(),
        cfg.vocab_size.to_string(),
        cfg.num_classes.to_string(),
        format!("{:?}", d.input),
        format!("{:?}", d.hidden),
        format!("{:?}", d.attention),
        format!("{:?}", d.classifier),
        cfg.seed.to_string(),
        cfg.precision.to_string(),
        format!("{:?}", o.lr),
        format!("{:?}", o.beta1),
        format!("{:?}", o.beta2),
        format!("{:?}", o.eps),
        o.warmup_steps.to_string(),
        cfg.steps.to_string(),
        cfg.batch_size.to_string(),
        cfg.log_every.to_string(),
        format!("{:?}", cfg.valid_fraction),
        format!("{:?}", cfg.test_fraction),
    ];
    let mut out = String::new();
    for (key, value) in KEYS.iter().zip(values) {
        let _ = writeln!(out, "{key} = {value}");
    }
    out
}
