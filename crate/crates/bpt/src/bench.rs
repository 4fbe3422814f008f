//! Forward-pass throughput of graph attention against the dense stack.

use std::time::Instant;

use bpt_core::graph::{build_graph, count_edges_oracle};
use bpt_core::model::{dense_reference_forward, forward, ModelParams, RunConfig};
use bpt_core::{Error, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HarnessError, Result};

/// Dense attention above this many score entries per head is not attempted.
pub const DENSE_SCORE_LIMIT: usize = 1 << 26;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub length: usize,
    pub edges: usize,
    pub dense_pairs: usize,
    pub sparse_tokens_per_sec: f64,
    /// `None` when the dense stack ran out of memory or exceeded the budget.
    pub dense_tokens_per_sec: Option<f64>,
}

impl BenchRow {
    pub fn to_tsv(&self) -> String {
        let dense = match self.dense_tokens_per_sec {
            Some(x) => format!("{x:.1}"),
            None => "NA".to_owned(),
        };
        format!("{}\t{}\t{}\t{:.1}\t{}", self.length, self.edges, self.dense_pairs, self.sparse_tokens_per_sec, dense)
    }
}

pub const BENCH_HEADER: &str = "length\tedges\tdense_n2\tsparse_tok_per_s\tdense_tok_per_s";

/// Parses a comma-separated list of powers of two.
pub fn parse_lengths(text: &str) -> Result<Vec<usize>> {
    let lengths = text
        .split(',')
        .map(|s| {
            let n: usize = s.trim().parse().map_err(|_| HarnessError::Usage(format!("bad length {s:?}")))?;
            if n < 2 || !n.is_power_of_two() {
                return Err(HarnessError::Usage(format!("length {n} is not a power of two ≥ 2")));
            }
            Ok(n)
        })
        .collect::<Result<Vec<_>>>()?;
    if lengths.is_empty() {
        return Err(HarnessError::Usage("no lengths given".into()));
    }
    Ok(lengths)
}

/// Runs `budget / length` sequences of random tokens through both models for
/// every length. The graph edge count is checked against the oracle.
pub fn bench<T: Real>(config: &RunConfig, lengths: &[usize], budget: usize, seed: u64) -> Result<Vec<BenchRow>> {
    let n_max = lengths.iter().copied().max().unwrap_or(1);
    let config = RunConfig {
        n_max,
        vocab_size: config.vocab_size.max(32),
        num_classes: config.num_classes.max(2),
        ..config.clone()
    };
    let params = ModelParams::<T>::init(&config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(lengths.len());
    for &length in lengths {
        let graph = build_graph(length, config.k, config.mode)?;
        let oracle = count_edges_oracle(length, config.k, config.mode)?.total();
        if oracle != graph.edge_count() {
            return Err(HarnessError::Data(format!(
                "length {length}: graph has {} edges, oracle counts {oracle}",
                graph.edge_count()
            )));
        }
        let reps = (budget / length).max(1);
        let inputs: Vec<Vec<u32>> =
            (0..reps).map(|_| (0..length).map(|_| rng.gen_range(3..config.vocab_size as u32)).collect()).collect();

        let t = Instant::now();
        for tokens in &inputs {
            forward(tokens, &params, &graph)?;
        }
        let sparse = (reps * length) as f64 / t.elapsed().as_secs_f64().max(1e-9);

        let dense = if length * length > DENSE_SCORE_LIMIT {
            None
        } else {
            let t = Instant::now();
            let mut ok = true;
            for tokens in &inputs {
                match dense_reference_forward(tokens, &params, config.mode == bpt_core::graph::Mode::Causal) {
                    Ok(_) => {}
                    Err(Error::OutOfMemory(msg)) => {
                        log::warn!("dense stack at length {length}: {msg}");
                        ok = false;
                        break;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            ok.then(|| (reps * length) as f64 / t.elapsed().as_secs_f64().max(1e-9))
        };
        rows.push(BenchRow {
            length,
            edges: graph.edge_count(),
            dense_pairs: length * length,
            sparse_tokens_per_sec: sparse,
            dense_tokens_per_sec: dense,
        });
    }
    Ok(rows)
}
