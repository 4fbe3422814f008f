//! Optimizer loop shared by language modeling and classification.
//!
//! Step `s` draws its batch and dropout masks from a ChaCha stream keyed by
//! `(seed, s)`, so a run resumed from a checkpoint continues exactly where
//! an uninterrupted run would be.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bpt_core::graph::{build_graph, Mode};
use bpt_core::model::{loss_and_grads, Dropout, ModelParams, Precision, RunConfig, Task};
use bpt_core::numeric::{adam_step, AdamState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{Checkpoint, Scalar};
use crate::corpus::TrainData;
use crate::error::{HarnessError, Result};
use crate::metrics::{bits_per_char, evaluate, metrics_header, MetricsRecord};

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Best-validation checkpoint; the latest state goes to the same path
    /// with `.last` appended.
    pub out: Option<PathBuf>,
    /// Checkpoint to continue from.
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainSummary<T> {
    pub records: Vec<MetricsRecord>,
    pub best_valid: f64,
    pub params: ModelParams<T>,
}

pub fn last_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".last");
    PathBuf::from(s)
}

/// Random source for optimizer step `step`.
pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng
}

fn check_sizes(config: &mut RunConfig, data: &TrainData, task: Task) -> Result<()> {
    let vocab = data.vocab.len();
    if config.vocab_size != 0 && config.vocab_size != vocab {
        return Err(HarnessError::Data(format!(
            "config vocab_size = {} but the corpus has {vocab} symbols",
            config.vocab_size
        )));
    }
    config.vocab_size = vocab;
    if task == Task::Classification {
        let classes = data.labels.len();
        if config.num_classes != 0 && config.num_classes != classes {
            return Err(HarnessError::Data(format!(
                "config num_classes = {} but the corpus has {classes} labels",
                config.num_classes
            )));
        }
        config.num_classes = classes;
    }
    Ok(())
}

pub fn train_lm<T: Scalar>(
    data: &TrainData,
    config: &RunConfig,
    opts: &TrainOptions,
    sink: &mut dyn Write,
) -> Result<TrainSummary<T>> {
    if config.mode != Mode::Causal {
        return Err(HarnessError::Usage("language modeling needs mode = causal".into()));
    }
    let mut config = config.clone();
    check_sizes(&mut config, data, Task::LanguageModel)?;
    run::<T>(data, config, opts, sink)
}

pub fn train_cls<T: Scalar>(
    data: &TrainData,
    config: &RunConfig,
    opts: &TrainOptions,
    sink: &mut dyn Write,
) -> Result<TrainSummary<T>> {
    if config.mode != Mode::Bidirectional {
        return Err(HarnessError::Usage("classification needs mode = bi".into()));
    }
    let mut config = config.clone();
    check_sizes(&mut config, data, Task::Classification)?;
    if config.num_classes == 1 {
        log::warn!("the training data has a single class; accuracy is trivially 1");
    }
    run::<T>(data, config, opts, sink)
}

fn io_err(e: std::io::Error) -> HarnessError {
    HarnessError::io("<metrics>", e)
}

fn run<T: Scalar>(
    data: &TrainData,
    config: RunConfig,
    opts: &TrainOptions,
    sink: &mut dyn Write,
) -> Result<TrainSummary<T>> {
    config.validate()?;
    if data.train.is_empty() || data.valid.is_empty() {
        return Err(HarnessError::Data("train and valid splits must be non-empty".into()));
    }
    let graph = build_graph(config.n_max, config.k, config.mode)?;
    let degree = graph.degree_stats();

    let (mut params, mut adam, mut best_valid, start) = match &opts.resume {
        Some(path) => {
            let ck = Checkpoint::<T>::load(path)?;
            let same = RunConfig { steps: config.steps, ..ck.config.clone() };
            if same != config || ck.vocab != data.vocab || ck.labels != data.labels {
                return Err(HarnessError::Checkpoint(format!(
                    "{} was written for a different configuration or corpus",
                    path.display()
                )));
            }
            (ck.params, ck.adam, ck.best_valid, ck.step)
        }
        None => {
            let params = ModelParams::<T>::init(&config, config.seed)?;
            let adam = AdamState::new(params.shapes());
            (params, adam, f64::INFINITY, 0)
        }
    };

    let task = config.task();
    writeln!(sink, "{}", metrics_header(task)).map_err(io_err)?;
    let started = Instant::now();
    let mut records = Vec::new();
    let mut loss_sum = 0.0;
    let mut loss_steps = 0u64;
    let rates = config.training_dropout();

    for step in start + 1..=config.steps {
        let mut rng = step_rng(config.seed, step);
        let batch: Vec<_> =
            (0..config.batch_size).map(|_| data.train[rng.gen_range(0..data.train.len())].clone()).collect();
        let mut dropout = Dropout { rates, rng: &mut rng };
        let (loss, grads) = loss_and_grads(&batch, &params, &graph, Some(&mut dropout)).map_err(HarnessError::Core)?;
        {
            let mut tensors = params.tensors_mut();
            adam_step(&mut tensors, &grads.tensors(), &mut adam, &config.optimizer)?;
        }
        loss_sum += loss.to_f64();
        loss_steps += 1;

        if step % config.log_every != 0 && step != config.steps {
            continue;
        }
        let train_loss = loss_sum / loss_steps as f64;
        loss_sum = 0.0;
        loss_steps = 0;
        let train_metric = match task {
            Task::LanguageModel => bits_per_char(train_loss),
            Task::Classification => evaluate(&data.train, &params, &graph)?.metric,
        };
        let valid = evaluate(&data.valid, &params, &graph)?;
        let record = MetricsRecord {
            step,
            train_loss,
            train_metric,
            valid_loss: valid.loss,
            valid_metric: valid.metric,
            degree,
            wall_secs: match config.precision {
                Precision::Verify => 0.0,
                Precision::Fast => started.elapsed().as_secs_f64(),
            },
        };
        writeln!(sink, "{}", record.to_tsv()).map_err(io_err)?;
        sink.flush().map_err(io_err)?;
        records.push(record);

        let improved = valid.loss < best_valid;
        if improved {
            best_valid = valid.loss;
        }
        if let Some(out) = &opts.out {
            let ck = Checkpoint {
                config: config.clone(),
                vocab: data.vocab.clone(),
                labels: data.labels.clone(),
                step,
                best_valid,
                params: params.clone(),
                adam: adam.clone(),
            };
            if improved {
                ck.save(out)?;
            }
            ck.save(&last_path(out))?;
        }
    }
    Ok(TrainSummary { records, best_valid, params })
}
