//! Token-only full self-attention with the same layer stack, used as a
//! reference and as the dense baseline in benchmarks.

use alloc::vec::Vec;

use super::forward::PAD_ID;
use super::params::ModelParams;
use crate::error::{bail, Error, Result};
use crate::numeric::{ffn, layer_norm, matmul, segment_softmax, Matrix, SegmentVector};
use crate::Real;

/// Final token states (`tokens.len() × d`) of a model whose attention covers
/// every token (or every earlier token when `causal`). Relation vectors are
/// ignored. The score matrix is allocated fallibly, so very long inputs fail
/// with [`Error::OutOfMemory`] instead of aborting.
pub fn dense_reference_forward<T: Real>(tokens: &[u32], params: &ModelParams<T>, causal: bool) -> Result<Matrix<T>> {
    let n = tokens.len();
    if n == 0 {
        bail!(InvalidInput, "empty token sequence");
    }
    let d = params.d_model();
    let vocab = params.vocab_size();
    let mut h = Matrix::try_zeros(n, d)?;
    for (t, &id) in tokens.iter().enumerate() {
        if id as usize >= vocab {
            return Err(Error::Vocabulary { id, vocab });
        }
        if id != PAD_ID {
            h.row_mut(t).copy_from_slice(params.embedding.row(id as usize));
        }
    }

    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    for i in 0..n {
        offsets.push(offsets[i] + if causal { i + 1 } else { n });
    }
    let total = offsets[n];

    for layer in &params.layers {
        let attn = &layer.attention;
        let heads = attn.heads;
        let dh = attn.head_dim();
        let scale = T::one() / T::from_f64(dh as f64).sqrt();
        let q = matmul(&h, &attn.wq)?;
        let k = matmul(&h, &attn.wk)?;
        let v = matmul(&h, &attn.wv)?;
        let mut context = Matrix::try_zeros(n, d)?;
        for head in 0..heads {
            let cols = head * dh..(head + 1) * dh;
            let slice = |m: &Matrix<T>| Matrix::from_fn(n, dh, |r, c| m.get(r, cols.start + c));
            let (qh, kh, vh) = (slice(&q), slice(&k), slice(&v));
            let mut values = Vec::new();
            values
                .try_reserve_exact(total)
                .map_err(|_| Error::OutOfMemory(alloc::format!("{total} attention scores")))?;
            for i in 0..n {
                let width = offsets[i + 1] - offsets[i];
                let qi = qh.row(i);
                values.extend((0..width).map(|j| {
                    let s: T = qi.iter().zip(kh.row(j)).map(|(&a, &b)| a * b).sum();
                    s * scale
                }));
            }
            let probs = segment_softmax(&SegmentVector::new(values, offsets.clone())?)?;
            for i in 0..n {
                let out = &mut context.row_mut(i)[cols.clone()];
                for (j, &p) in probs.segment(i).iter().enumerate() {
                    for (o, &x) in out.iter_mut().zip(vh.row(j)) {
                        *o += p * x;
                    }
                }
            }
        }
        let mut a = matmul(&context, &attn.wo)?;
        a.add_assign(&h)?;
        let (z, _) = layer_norm(&a, &layer.norm1_gain, &layer.norm1_bias)?;
        let (mut f, _) = ffn(&z, &layer.ffn)?;
        f.add_assign(&z)?;
        h = layer_norm(&f, &layer.norm2_gain, &layer.norm2_bias)?.0;
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, Mode};
    use crate::model::{forward, RunConfig};

    fn check(mode: Mode, layers: usize) {
        let cfg = RunConfig {
            n_max: 16,
            k: 16,
            layers,
            d_model: 16,
            heads: 4,
            d_ff: 32,
            vocab_size: 11,
            num_classes: 3,
            mode,
            ..RunConfig::default()
        };
        let mut p = ModelParams::<f64>::init(&cfg, 9).unwrap();
        for l in &mut p.layers {
            l.attention.relations.fill(0.0);
        }
        let tokens: Vec<u32> = (0..16).map(|i| 1 + (i * 7 % 10) as u32).collect();
        let g = build_graph(16, 16, mode).unwrap();
        let sparse = forward(&tokens, &p, &g).unwrap();
        let dense = dense_reference_forward(&tokens, &p, mode == Mode::Causal).unwrap();
        for t in 0..16 {
            for (a, b) in sparse.row(t).iter().zip(dense.row(t)) {
                assert!((a - b).abs() < 1e-8, "token {t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn matches_sparse_when_context_covers_sequence() {
        for layers in [1, 2] {
            check(Mode::Causal, layers);
            check(Mode::Bidirectional, layers);
        }
    }
}
