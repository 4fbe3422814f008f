//! Evaluation metrics and the tab-separated metrics stream.

use std::f64::consts::LN_2;

use bpt_core::graph::{BpGraph, DegreeStats};
use bpt_core::model::{cls_logits, forward, sample_loss, ModelParams, Sample, Task};
use bpt_core::Real;

use crate::error::{HarnessError, Result};

/// Bits per character from mean nats per character.
pub fn bits_per_char(nats: f64) -> f64 {
    nats / LN_2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    /// Mean loss in nats: per character for language modeling, per sample
    /// for classification.
    pub loss: f64,
    /// BPC for language modeling, accuracy for classification.
    pub metric: f64,
}

/// Index of the largest logit; the first wins ties.
pub fn predict_class<T: Real>(tokens: &[u32], params: &ModelParams<T>, graph: &BpGraph) -> Result<usize> {
    let logits = cls_logits(&forward(tokens, params, graph)?, params)?;
    let row = logits.row(0);
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    Ok(best)
}

pub fn evaluate<T: Real>(samples: &[Sample], params: &ModelParams<T>, graph: &BpGraph) -> Result<EvalResult> {
    if samples.is_empty() {
        return Err(HarnessError::Data("nothing to evaluate".into()));
    }
    let mut loss = 0.0;
    let mut count = 0;
    let mut correct = 0;
    for s in samples {
        let (l, c) = sample_loss(s, params, graph)?;
        loss += l.to_f64();
        count += c;
        if let Sample::Cls { tokens, label } = s {
            correct += usize::from(predict_class(tokens, params, graph)? == *label);
        }
    }
    let mean = loss / count as f64;
    let metric = match params.task {
        Task::LanguageModel => bits_per_char(mean),
        Task::Classification => correct as f64 / samples.len() as f64,
    };
    Ok(EvalResult { loss: mean, metric })
}

/// One line of the metrics stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub train_loss: f64,
    pub train_metric: f64,
    pub valid_loss: f64,
    pub valid_metric: f64,
    pub degree: DegreeStats,
    pub wall_secs: f64,
}

pub fn metrics_header(task: Task) -> &'static str {
    match task {
        Task::LanguageModel => {
            "step\ttrain_loss\ttrain_bpc\tvalid_loss\tvalid_bpc\tdeg_min\tdeg_mean\tdeg_max\tedges\twall_secs"
        }
        Task::Classification => {
            "step\ttrain_loss\ttrain_acc\tvalid_loss\tvalid_acc\tdeg_min\tdeg_mean\tdeg_max\tedges\twall_secs"
        }
    }
}

impl MetricsRecord {
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.3}\t{}\t{}\t{:.3}",
            self.step,
            self.train_loss,
            self.train_metric,
            self.valid_loss,
            self.valid_metric,
            self.degree.min,
            self.degree.mean,
            self.degree.max,
            self.degree.edges,
            self.wall_secs
        )
    }
}

/// Parses a metrics stream back into (header columns, rows of numbers).
pub fn parse_metrics(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| HarnessError::Data("empty metrics stream".into()))?
        .split('\t')
        .map(str::to_owned)
        .collect();
    let rows = lines
        .map(|l| {
            l.split('\t')
                .map(|x| x.parse::<f64>().map_err(|_| HarnessError::Data(format!("bad metrics value {x:?}"))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.iter().any(|r| r.len() != header.len()) {
        return Err(HarnessError::Data("metrics row width differs from header".into()));
    }
    Ok((header, rows))
}
