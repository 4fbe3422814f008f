use std::io::Write;
use std::path::{Path, PathBuf};

use bpt_core::graph::{build_graph, Mode};
use bpt_core::model::{forward_cached, gradcheck_config, gradient_check, Precision, RunConfig, Sample, Task};
use clap::{Args, Parser, Subcommand};

use crate::bench::{bench, parse_lengths, BENCH_HEADER};
use crate::checkpoint::{peek_element_tag, Checkpoint, Scalar};
use crate::config::load_config_with;
use crate::corpus::{encode_labeled, lm_chunks, shift_samples, ClsCorpus, LmCorpus};
use crate::error::{HarnessError, Result};
use crate::export::{export_graph, traces_to_json, GraphFormat};
use crate::metrics::evaluate;
use crate::train::{train_cls, train_lm, TrainOptions};

/// Binary-partition graph attention: graphs, training and evaluation.
#[derive(Debug, Parser)]
#[command(name = "bpt", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the attention graph for a sequence length.
    Graph(GraphArgs),
    /// Train a causal character language model.
    TrainLm(TrainArgs),
    /// Train a root-readout sequence classifier.
    TrainCls(TrainArgs),
    /// Evaluate a checkpoint on the held-out test split.
    Eval(EvalArgs),
    /// Classification accuracy with placeholder tokens prepended.
    ShiftEval(ShiftArgs),
    /// Compare model gradients with finite differences.
    GradCheck(GradCheckArgs),
    /// Throughput of graph attention against dense attention.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value = "bi")]
    pub mode: String,
    #[arg(long, default_value = "json")]
    pub format: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Raw text (language modeling) or `label<TAB>text` lines.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides n_max.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub precision: Option<String>,
    /// Best-validation checkpoint path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Write per-edge attention weights of the first test sample here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ShiftArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Largest number of placeholders to prepend.
    #[arg(long, default_value_t = 7)]
    pub shift: usize,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "64,128,256,512")]
    pub lengths: String,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub precision: Option<String>,
    /// Tokens processed per length.
    #[arg(long, default_value_t = 2048)]
    pub budget: usize,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

fn parse_precision(s: &str) -> Result<Precision> {
    s.parse().map_err(|e: bpt_core::Error| HarnessError::Usage(e.to_string()))
}

fn parse_mode(s: &str) -> Result<Mode> {
    s.parse().map_err(|e: bpt_core::Error| HarnessError::Usage(e.to_string()))
}

fn write_output(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| HarnessError::io(path, e)),
        None => stdout.write_all(text.as_bytes()).map_err(|e| HarnessError::io("<stdout>", e)),
    }
}

/// Runs one parsed command, writing results to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Graph(a) => {
            if a.k == 0 {
                return Err(HarnessError::Usage("--k must be at least 1".into()));
            }
            let format: GraphFormat = a.format.parse()?;
            let graph = build_graph(a.n, a.k, parse_mode(&a.mode)?)?;
            write_output(a.out.as_deref(), &export_graph(&graph, format), stdout)
        }
        Command::TrainLm(a) => train_command(a, Task::LanguageModel, stdout),
        Command::TrainCls(a) => train_command(a, Task::Classification, stdout),
        Command::Eval(a) => {
            let bytes = std::fs::read(&a.checkpoint).map_err(|e| HarnessError::io(&a.checkpoint, e))?;
            match peek_element_tag(&bytes)? {
                64 => eval_command(Checkpoint::<f64>::from_bytes(&bytes)?, &a, stdout),
                _ => eval_command(Checkpoint::<f32>::from_bytes(&bytes)?, &a, stdout),
            }
        }
        Command::ShiftEval(a) => {
            let bytes = std::fs::read(&a.checkpoint).map_err(|e| HarnessError::io(&a.checkpoint, e))?;
            match peek_element_tag(&bytes)? {
                64 => shift_command(Checkpoint::<f64>::from_bytes(&bytes)?, &a, stdout),
                _ => shift_command(Checkpoint::<f32>::from_bytes(&bytes)?, &a, stdout),
            }
        }
        Command::GradCheck(a) => grad_check_command(&a, stdout),
        Command::Bench(a) => {
            let mut config = match &a.config {
                Some(p) => load_config_with(p, RunConfig::default())?,
                None => RunConfig::default(),
            };
            if let Some(k) = a.k {
                config.k = k;
            }
            if let Some(m) = &a.mode {
                config.mode = parse_mode(m)?;
            }
            if let Some(p) = &a.precision {
                config.precision = parse_precision(p)?;
            }
            config.validate()?;
            let lengths = parse_lengths(&a.lengths)?;
            let rows = match config.precision {
                Precision::Verify => bench::<f64>(&config, &lengths, a.budget, a.seed)?,
                Precision::Fast => bench::<f32>(&config, &lengths, a.budget, a.seed)?,
            };
            let mut text = format!("{BENCH_HEADER}\n");
            for r in rows {
                text.push_str(&r.to_tsv());
                text.push('\n');
            }
            write_output(None, &text, stdout)
        }
    }
}

fn train_command(a: TrainArgs, task: Task, stdout: &mut dyn Write) -> Result<()> {
    let base = match task {
        Task::LanguageModel => RunConfig::default(),
        Task::Classification => RunConfig::classification(),
    };
    let mut config = match &a.config {
        Some(p) => load_config_with(p, base)?,
        None => base,
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(n) = a.n {
        config.n_max = n;
    }
    if let Some(k) = a.k {
        config.k = k;
    }
    if let Some(p) = &a.precision {
        config.precision = parse_precision(p)?;
    }
    config.validate().map_err(|e| HarnessError::Usage(e.to_string()))?;
    let text = read_text(&a.data)?;
    let data = match task {
        Task::LanguageModel => {
            LmCorpus::from_text(&text, config.valid_fraction, config.test_fraction)?.training_data(config.n_max)?
        }
        Task::Classification => ClsCorpus::from_text(&text, config.valid_fraction, config.test_fraction, config.seed)?
            .training_data(config.n_max)?,
    };
    let opts = TrainOptions { out: a.out, resume: a.resume };
    let summary_best = match (task, config.precision) {
        (Task::LanguageModel, Precision::Verify) => train_lm::<f64>(&data, &config, &opts, stdout)?.best_valid,
        (Task::LanguageModel, Precision::Fast) => train_lm::<f32>(&data, &config, &opts, stdout)?.best_valid,
        (Task::Classification, Precision::Verify) => train_cls::<f64>(&data, &config, &opts, stdout)?.best_valid,
        (Task::Classification, Precision::Fast) => train_cls::<f32>(&data, &config, &opts, stdout)?.best_valid,
    };
    log::info!("best validation loss {summary_best}");
    Ok(())
}

/// Test-split samples of the corpus at `data`, encoded with the checkpoint's
/// vocabulary.
fn test_samples<T: Scalar>(ck: &Checkpoint<T>, data: &Path) -> Result<Vec<Sample>> {
    let text = read_text(data)?;
    let cfg = &ck.config;
    match cfg.task() {
        Task::LanguageModel => {
            let corpus = LmCorpus::from_text(&text, cfg.valid_fraction, cfg.test_fraction)?;
            if corpus.vocab != ck.vocab {
                return Err(HarnessError::Data("corpus vocabulary differs from the checkpoint's".into()));
            }
            lm_chunks(corpus.test.for_evaluation(), cfg.n_max)
        }
        Task::Classification => {
            let corpus = ClsCorpus::from_text(&text, cfg.valid_fraction, cfg.test_fraction, cfg.seed)?;
            encode_labeled(corpus.test.for_evaluation(), &ck.vocab, &ck.labels, cfg.n_max)
        }
    }
}

fn eval_command<T: Scalar>(ck: Checkpoint<T>, a: &EvalArgs, stdout: &mut dyn Write) -> Result<()> {
    let samples = test_samples(&ck, &a.data)?;
    let cfg = &ck.config;
    let graph = build_graph(cfg.n_max, cfg.k, cfg.mode)?;
    let result = evaluate(&samples, &ck.params, &graph)?;
    let metric = match cfg.task() {
        Task::LanguageModel => "bpc",
        Task::Classification => "accuracy",
    };
    let text = format!("split\tsamples\tloss\t{metric}\ntest\t{}\t{}\t{}\n", samples.len(), result.loss, result.metric);
    write_output(None, &text, stdout)?;
    if let Some(path) = &a.trace {
        let cache = forward_cached(samples[0].tokens(), &ck.params, &graph, None)?;
        write_output(Some(path), &traces_to_json(&graph, cache.traces()), stdout)?;
    }
    Ok(())
}

fn shift_command<T: Scalar>(ck: Checkpoint<T>, a: &ShiftArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = &ck.config;
    if cfg.task() != Task::Classification {
        return Err(HarnessError::Usage("shift-eval needs a classification checkpoint".into()));
    }
    let samples = test_samples(&ck, &a.data)?;
    let graph = build_graph(cfg.n_max, cfg.k, cfg.mode)?;
    let mut text = String::from("shift\taccuracy\tdelta\n");
    let mut base = None;
    for z in 0..=a.shift {
        let shifted = shift_samples(&samples, z, cfg.n_max)?;
        let acc = evaluate(&shifted, &ck.params, &graph)?.metric;
        let b = *base.get_or_insert(acc);
        text.push_str(&format!("{z}\t{acc}\t{}\n", acc - b));
    }
    write_output(None, &text, stdout)
}

/// Largest relative error the full-model check accepts.
pub const GRAD_TOLERANCE: f64 = 1e-4;

fn grad_check_command(a: &GradCheckArgs, stdout: &mut dyn Write) -> Result<()> {
    let mut text = String::from("task\ttensor\tparams\trel_error\n");
    let mut worst: f64 = 0.0;
    for task in [Task::LanguageModel, Task::Classification] {
        let cfg = gradcheck_config(task);
        let report = gradient_check(&cfg, a.n, a.seed, 1e-5)?;
        let name = match task {
            Task::LanguageModel => "lm",
            Task::Classification => "cls",
        };
        for g in &report.groups {
            text.push_str(&format!("{name}\t{}\t{}\t{:e}\n", g.name, g.params, g.rel_error));
        }
        worst = worst.max(report.max_error());
    }
    text.push_str(&format!("max_rel_error\t{worst:e}\n"));
    write_output(None, &text, stdout)?;
    if worst.is_nan() || worst >= GRAD_TOLERANCE {
        return Err(HarnessError::Data(format!("gradient check failed: {worst:e} ≥ {GRAD_TOLERANCE:e}")));
    }
    Ok(())
}
