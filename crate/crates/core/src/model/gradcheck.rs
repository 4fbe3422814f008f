//! Finite-difference check of the full model gradient.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{RunConfig, Task};
use super::forward::{batch_loss, loss_and_grads, Sample};
use super::params::ModelParams;
use crate::error::{bail, Result};
use crate::graph::build_graph;
use crate::numeric::relative_error;

/// Relative error of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub params: usize,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub task: Task,
    pub loss: f64,
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.groups.iter().map(|g| g.rel_error).fold(0.0, f64::max)
    }
}

fn random_samples(config: &RunConfig, n: usize, rng: &mut ChaCha8Rng) -> Vec<Sample> {
    let vocab = config.vocab_size as u32;
    (0..2)
        .map(|_| {
            let tokens: Vec<u32> = (0..n).map(|_| rng.gen_range(1.min(vocab - 1)..vocab)).collect();
            match config.task() {
                Task::LanguageModel => {
                    let targets = (0..n).map(|_| rng.gen_range(0..vocab)).collect();
                    let mut mask = alloc::vec![true; n];
                    mask[n - 1] = n == 1;
                    Sample::Lm { tokens, targets, mask }
                }
                Task::Classification => Sample::Cls { tokens, label: rng.gen_range(0..config.num_classes) },
            }
        })
        .collect()
}

/// Compares analytic gradients against central differences with step `h` on
/// a random batch of two length-`n` samples. Every parameter, including
/// relation embeddings, gains and biases, is first moved away from its
/// initial value so that no tensor sits at a special point.
pub fn gradient_check(config: &RunConfig, n: usize, seed: u64, h: f64) -> Result<GradCheckReport> {
    if n == 0 || n > config.n_max {
        bail!(InvalidInput, "sequence length {n} outside 1..={}", config.n_max);
    }
    let mut params = ModelParams::<f64>::init(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for m in params.tensors_mut() {
        for x in m.data_mut() {
            *x += rng.gen_range(-0.3..0.3);
        }
    }
    let graph = build_graph(n, config.k, config.mode)?;
    let batch = random_samples(config, n, &mut rng);
    let (loss, grads) = loss_and_grads(&batch, &params, &graph, None)?;

    let names = params.tensor_names();
    let mut groups = Vec::with_capacity(names.len());
    for (t, name) in names.into_iter().enumerate() {
        let analytic = grads.tensors()[t].data().to_vec();
        let len = analytic.len();
        let mut numeric = Vec::with_capacity(len);
        for i in 0..len {
            let orig = params.tensors()[t].data()[i];
            let mut eval = |x: f64| -> Result<f64> {
                params.tensors_mut()[t].data_mut()[i] = x;
                batch_loss(&batch, &params, &graph)
            };
            let plus = eval(orig + h)?;
            let minus = eval(orig - h)?;
            eval(orig)?;
            numeric.push((plus - minus) / (2.0 * h));
        }
        groups.push(GroupError { name, params: len, rel_error: relative_error(&analytic, &numeric) });
    }
    Ok(GradCheckReport { task: config.task(), loss, groups })
}

/// Small configuration used by the built-in check: 8 tokens, width 16,
/// two layers and two heads.
pub fn gradcheck_config(task: Task) -> RunConfig {
    let base = match task {
        Task::LanguageModel => RunConfig::default(),
        Task::Classification => RunConfig::classification(),
    };
    RunConfig { n_max: 8, k: 1, layers: 2, d_model: 16, heads: 2, d_ff: 32, vocab_size: 7, num_classes: 3, ..base }
}
