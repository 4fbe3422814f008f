use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{RunConfig, Task};
use crate::attention::AttentionParams;
use crate::error::{bail, Result};
use crate::graph::Mode;
use crate::numeric::{xavier_uniform, FfnParams, Matrix};
use crate::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub attention: AttentionParams<T>,
    pub norm1_gain: Matrix<T>,
    pub norm1_bias: Matrix<T>,
    pub ffn: FfnParams<T>,
    pub norm2_gain: Matrix<T>,
    pub norm2_bias: Matrix<T>,
}

/// All trainable weights. Doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub task: Task,
    pub mode: Mode,
    pub n_max: usize,
    pub k: usize,
    /// `vocab × d`; the PAD row is never read.
    pub embedding: Matrix<T>,
    pub layers: Vec<LayerParams<T>>,
    /// `d × outputs` (vocabulary for language modeling, classes otherwise).
    pub head_weight: Matrix<T>,
    pub head_bias: Matrix<T>,
}

impl<T: Real> ModelParams<T> {
    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let outputs = config.output_size();
        if config.vocab_size == 0 || outputs == 0 {
            bail!(Config, "vocabulary and output sizes must be set before building a model");
        }
        let d = config.d_model;
        let layout = config.relation_layout()?;
        let layers = (0..config.layers)
            .map(|_| {
                Ok(LayerParams {
                    attention: AttentionParams::zeros(d, config.heads, layout)?,
                    norm1_gain: Matrix::zeros(1, d),
                    norm1_bias: Matrix::zeros(1, d),
                    ffn: FfnParams::zeros(d, config.d_ff),
                    norm2_gain: Matrix::zeros(1, d),
                    norm2_bias: Matrix::zeros(1, d),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            task: config.task(),
            mode: config.mode,
            n_max: config.n_max,
            k: config.k,
            embedding: Matrix::zeros(config.vocab_size, d),
            layers,
            head_weight: Matrix::zeros(d, outputs),
            head_bias: Matrix::zeros(1, outputs),
        })
    }

    /// Glorot-uniform weight matrices, unit norm gains, zero biases and zero
    /// relation embeddings. Fully determined by `seed`.
    pub fn init(config: &RunConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |m: &mut Matrix<T>| *m = xavier_uniform(m.rows(), m.cols(), &mut rng);
        glorot(&mut p.embedding);
        for layer in &mut p.layers {
            let a = &mut layer.attention;
            glorot(&mut a.wq);
            glorot(&mut a.wk);
            glorot(&mut a.wv);
            glorot(&mut a.wo);
            glorot(&mut layer.ffn.w1);
            glorot(&mut layer.ffn.w2);
            layer.norm1_gain.fill(T::one());
            layer.norm2_gain.fill(T::one());
        }
        glorot(&mut p.head_weight);
        Ok(p)
    }

    pub fn d_model(&self) -> usize {
        self.embedding.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn outputs(&self) -> usize {
        self.head_weight.cols()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for m in z.tensors_mut() {
            m.fill(T::zero());
        }
        z
    }

    /// Tensor names in declared (checkpoint) order.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = alloc::vec![String::from("embedding")];
        for i in 0..self.layers.len() {
            for t in LAYER_TENSORS {
                names.push(format!("layer{i}.{t}"));
            }
        }
        names.push("head.weight".into());
        names.push("head.bias".into());
        names
    }

    /// Every tensor in declared order.
    pub fn tensors(&self) -> Vec<&Matrix<T>> {
        let mut out = alloc::vec![&self.embedding];
        for l in &self.layers {
            out.extend([
                &l.attention.wq,
                &l.attention.wk,
                &l.attention.wv,
                &l.attention.wo,
                &l.attention.relations,
                &l.norm1_gain,
                &l.norm1_bias,
                &l.ffn.w1,
                &l.ffn.b1,
                &l.ffn.w2,
                &l.ffn.b2,
                &l.norm2_gain,
                &l.norm2_bias,
            ]);
        }
        out.extend([&self.head_weight, &self.head_bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = alloc::vec![&mut self.embedding];
        for l in &mut self.layers {
            out.extend([
                &mut l.attention.wq,
                &mut l.attention.wk,
                &mut l.attention.wv,
                &mut l.attention.wo,
                &mut l.attention.relations,
                &mut l.norm1_gain,
                &mut l.norm1_bias,
                &mut l.ffn.w1,
                &mut l.ffn.b1,
                &mut l.ffn.w2,
                &mut l.ffn.b2,
                &mut l.norm2_gain,
                &mut l.norm2_bias,
            ]);
        }
        out.extend([&mut self.head_weight, &mut self.head_bias]);
        out
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors().iter().map(|m| m.shape()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|m| m.len()).sum()
    }

    /// Adds `other` tensor by tensor.
    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for m in self.tensors_mut() {
            m.scale(s);
        }
    }
}

const LAYER_TENSORS: [&str; 13] = [
    "wq",
    "wk",
    "wv",
    "wo",
    "relations",
    "norm1.gain",
    "norm1.bias",
    "ffn.w1",
    "ffn.b1",
    "ffn.w2",
    "ffn.b2",
    "norm2.gain",
    "norm2.bias",
];

/// Closed-form parameter count:
/// `V d + N (4 d² + R d_head + 2 d d_ff + d_ff + d + 4 d) + d C + C`.
pub fn expected_param_count(config: &RunConfig) -> Result<usize> {
    let d = config.d_model;
    let rel = config.relation_layout()?.len() * config.head_dim();
    let per_layer = 4 * d * d + rel + 2 * d * config.d_ff + config.d_ff + d + 4 * d;
    let out = config.output_size();
    Ok(config.vocab_size * d + config.layers * per_layer + d * out + out)
}
