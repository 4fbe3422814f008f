//! Stacked graph layers, task heads and the composed backward pass.
//!
//! Every layer applies, to all nodes at once,
//! `Z = norm(H + GSA(H))` then `H' = norm(Z + FFN(Z))`.
//! Token nodes start from their embeddings, span nodes from zero; span states
//! then flow through the residual stream like any other node.

use alloc::vec::Vec;

use rand::RngCore;

use super::config::{DropoutRates, Task};
use super::params::{LayerParams, ModelParams};
use crate::attention::{gsa_backward, gsa_forward, GsaCache};
use crate::error::{bail, Error, Result};
use crate::graph::{BpGraph, Mode, TreeShape};
use crate::numeric::{
    apply_mask, column_sums, cross_entropy_sum, dropout_mask, ffn, ffn_backward, layer_norm, layer_norm_backward,
    matmul, matmul_nt, matmul_tn, FfnCache, LayerNormCache, Matrix,
};
use crate::Real;

/// Reserved padding id; its embedding is the zero vector.
pub const PAD_ID: u32 = 0;

/// Random source and rates for training-time dropout.
pub struct Dropout<'a> {
    pub rates: DropoutRates,
    pub rng: &'a mut dyn RngCore,
}

impl Dropout<'_> {
    fn mask<T: Real>(&mut self, len: usize, p: f64) -> Option<Vec<T>> {
        (p > 0.0).then(|| dropout_mask(len, p, self.rng))
    }
}

/// One training or evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    /// `targets[t]` is the token that follows position `t`; positions with
    /// `mask[t] == false` are excluded from the loss.
    Lm {
        tokens: Vec<u32>,
        targets: Vec<u32>,
        mask: Vec<bool>,
    },
    Cls {
        tokens: Vec<u32>,
        label: usize,
    },
}

impl Sample {
    pub fn tokens(&self) -> &[u32] {
        match self {
            Sample::Lm { tokens, .. } | Sample::Cls { tokens, .. } => tokens,
        }
    }

    fn task(&self) -> Task {
        match self {
            Sample::Lm { .. } => Task::LanguageModel,
            Sample::Cls { .. } => Task::Classification,
        }
    }
}

fn check_graph<T: Real>(params: &ModelParams<T>, graph: &BpGraph) -> Result<()> {
    if graph.mode() != params.mode {
        bail!(Config, "graph is {} but the model was built for {}", graph.mode(), params.mode);
    }
    if graph.k() != params.k {
        bail!(Config, "graph built with k = {} but the model uses k = {}", graph.k(), params.k);
    }
    if graph.shape().n_padded() > params.n_max.next_power_of_two() {
        bail!(Config, "graph over {} padded tokens exceeds n_max = {}", graph.shape().n_padded(), params.n_max);
    }
    Ok(())
}

/// One row per tree node: token rows hold embeddings (zero for PAD and for
/// positions past `tokens`), span rows are zero.
pub fn init_states<T: Real>(tokens: &[u32], params: &ModelParams<T>, shape: &TreeShape) -> Result<Matrix<T>> {
    if tokens.len() > shape.n_padded() || tokens.len() > params.n_max {
        bail!(
            InvalidInput,
            "{} tokens exceed the tree ({}) or n_max ({})",
            tokens.len(),
            shape.n_padded(),
            params.n_max
        );
    }
    let vocab = params.vocab_size();
    let mut h = Matrix::zeros(shape.node_count(), params.d_model());
    for (t, &id) in tokens.iter().enumerate() {
        if id as usize >= vocab {
            return Err(Error::Vocabulary { id, vocab });
        }
        if id != PAD_ID {
            h.row_mut(t).copy_from_slice(params.embedding.row(id as usize));
        }
    }
    Ok(h)
}

#[derive(Debug, Clone)]
struct LayerCache<T> {
    input: Matrix<T>,
    gsa: GsaCache<T>,
    attn_mask: Option<Vec<T>>,
    norm1: LayerNormCache<T>,
    ffn: FfnCache<T>,
    ffn_mask: Option<Vec<T>>,
    norm2: LayerNormCache<T>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    tokens: Vec<u32>,
    input_mask: Option<Vec<T>>,
    layers: Vec<LayerCache<T>>,
    /// Final node states.
    pub states: Matrix<T>,
}

impl<T: Real> ForwardCache<T> {
    /// Attention traces of every layer, bottom first.
    pub fn traces(&self) -> impl Iterator<Item = &crate::attention::AttentionTrace<T>> {
        self.layers.iter().map(|l| &l.gsa.trace)
    }
}

/// Final node states without dropout.
pub fn forward<T: Real>(tokens: &[u32], params: &ModelParams<T>, graph: &BpGraph) -> Result<Matrix<T>> {
    forward_cached(tokens, params, graph, None).map(|c| c.states)
}

pub fn forward_cached<T: Real>(
    tokens: &[u32],
    params: &ModelParams<T>,
    graph: &BpGraph,
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<ForwardCache<T>> {
    check_graph(params, graph)?;
    if params.layers.is_empty() {
        bail!(Config, "model needs at least one layer");
    }
    let mut h = init_states(tokens, params, graph.shape())?;
    let input_mask = dropout.as_deref_mut().and_then(|d| {
        let p = d.rates.input;
        d.mask::<T>(h.len(), p)
    });
    if let Some(m) = &input_mask {
        apply_mask(h.data_mut(), m);
    }

    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let attn_dropout = dropout.as_deref_mut().map(|d| (d.rates.attention, &mut d.rng as &mut dyn RngCore));
        let (mut a, gsa) = gsa_forward(graph, &h, &layer.attention, attn_dropout)?;
        let attn_mask = dropout.as_deref_mut().and_then(|d| {
            let p = d.rates.hidden;
            d.mask::<T>(a.len(), p)
        });
        if let Some(m) = &attn_mask {
            apply_mask(a.data_mut(), m);
        }
        a.add_assign(&h)?;
        let (z, norm1) = layer_norm(&a, &layer.norm1_gain, &layer.norm1_bias)?;

        let (mut f, ffn_cache) = ffn(&z, &layer.ffn)?;
        let ffn_mask = dropout.as_deref_mut().and_then(|d| {
            let p = d.rates.hidden;
            d.mask::<T>(f.len(), p)
        });
        if let Some(m) = &ffn_mask {
            apply_mask(f.data_mut(), m);
        }
        f.add_assign(&z)?;
        let (next, norm2) = layer_norm(&f, &layer.norm2_gain, &layer.norm2_bias)?;

        layers.push(LayerCache {
            input: core::mem::replace(&mut h, next),
            gsa,
            attn_mask,
            norm1,
            ffn: ffn_cache,
            ffn_mask,
            norm2,
        });
    }
    Ok(ForwardCache { tokens: tokens.to_vec(), input_mask, layers, states: h })
}

fn token_rows<T: Real>(states: &Matrix<T>) -> Result<Matrix<T>> {
    let nodes = states.rows();
    if nodes == 0 || !(nodes + 1).is_multiple_of(2) || !nodes.div_ceil(2).is_power_of_two() {
        bail!(Shape, "{nodes} rows do not form a binary-partition tree");
    }
    let n = nodes.div_ceil(2);
    Matrix::from_vec(n, states.cols(), states.data()[..n * states.cols()].to_vec())
}

/// Next-token logits for every token position (`n_padded × vocab`).
pub fn lm_logits<T: Real>(states: &Matrix<T>, params: &ModelParams<T>) -> Result<Matrix<T>> {
    if params.task != Task::LanguageModel || params.mode != Mode::Causal {
        bail!(Config, "language-model logits need a causal language model");
    }
    let tokens = token_rows(states)?;
    let mut logits = matmul(&tokens, &params.head_weight)?;
    crate::numeric::add_row_bias(&mut logits, &params.head_bias)?;
    Ok(logits)
}

/// Class logits read from the root node (`1 × classes`).
pub fn cls_logits<T: Real>(states: &Matrix<T>, params: &ModelParams<T>) -> Result<Matrix<T>> {
    if params.task != Task::Classification || params.mode != Mode::Bidirectional {
        bail!(Config, "class logits need a bidirectional classifier");
    }
    let root = states.rows().checked_sub(1).ok_or_else(|| Error::Shape("no node states".into()))?;
    let r = Matrix::from_vec(1, states.cols(), states.row(root).to_vec())?;
    let mut logits = matmul(&r, &params.head_weight)?;
    crate::numeric::add_row_bias(&mut logits, &params.head_bias)?;
    Ok(logits)
}

fn lm_targets(targets: &[u32], mask: &[bool], n_padded: usize) -> Result<(Vec<usize>, Vec<bool>)> {
    if targets.len() != mask.len() || targets.len() > n_padded {
        bail!(Shape, "{} targets, {} mask entries, {} positions", targets.len(), mask.len(), n_padded);
    }
    let mut t: Vec<usize> = targets.iter().map(|&x| x as usize).collect();
    let mut m = mask.to_vec();
    t.resize(n_padded, 0);
    m.resize(n_padded, false);
    Ok((t, m))
}

/// Summed loss (nats) and number of scored positions of one sample, without
/// dropout.
pub fn sample_loss<T: Real>(sample: &Sample, params: &ModelParams<T>, graph: &BpGraph) -> Result<(T, usize)> {
    if sample.task() != params.task {
        bail!(Config, "sample does not match the model's task");
    }
    let states = forward(sample.tokens(), params, graph)?;
    match sample {
        Sample::Lm { targets, mask, .. } => {
            let logits = lm_logits(&states, params)?;
            let (t, m) = lm_targets(targets, mask, logits.rows())?;
            let ce = cross_entropy_sum(&logits, &t, &m)?;
            Ok((ce.loss_sum, ce.count))
        }
        Sample::Cls { label, .. } => {
            let logits = cls_logits(&states, params)?;
            let ce = cross_entropy_sum(&logits, &[*label], &[true])?;
            Ok((ce.loss_sum, 1))
        }
    }
}

/// Mean loss over a batch without dropout: per scored position for language
/// modeling, per sample for classification.
pub fn batch_loss<T: Real>(batch: &[Sample], params: &ModelParams<T>, graph: &BpGraph) -> Result<T> {
    let mut sum = T::zero();
    let mut count = 0;
    for s in batch {
        let (l, c) = sample_loss(s, params, graph)?;
        sum += l;
        count += c;
    }
    if count == 0 {
        bail!(InvalidInput, "batch has no scored positions");
    }
    Ok(sum / T::from_f64(count as f64))
}

/// Mean loss over the batch and its gradient with respect to every
/// parameter. Samples share `graph`.
pub fn loss_and_grads<T: Real>(
    batch: &[Sample],
    params: &ModelParams<T>,
    graph: &BpGraph,
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<(T, ModelParams<T>)> {
    check_graph(params, graph)?;
    if batch.iter().any(|s| s.task() != params.task) {
        bail!(Config, "batch does not match the model's task");
    }
    let n_padded = graph.shape().n_padded();
    let mut prepared = Vec::with_capacity(batch.len());
    let mut total = 0usize;
    for s in batch {
        let (targets, mask) = match s {
            Sample::Lm { targets, mask, .. } => lm_targets(targets, mask, n_padded)?,
            Sample::Cls { label, .. } => {
                if *label >= params.outputs() {
                    bail!(InvalidInput, "label {label} outside {} classes", params.outputs());
                }
                (alloc::vec![*label], alloc::vec![true])
            }
        };
        total += mask.iter().filter(|&&m| m).count();
        prepared.push((targets, mask));
    }
    if total == 0 {
        bail!(InvalidInput, "every position in the batch is masked");
    }
    let norm = T::one() / T::from_f64(total as f64);

    let mut grads = params.zeros_like();
    let mut loss_sum = T::zero();
    for (sample, (targets, mask)) in batch.iter().zip(&prepared) {
        let cache = forward_cached(sample.tokens(), params, graph, dropout.as_deref_mut())?;
        let mut d_states = Matrix::zeros(cache.states.rows(), cache.states.cols());
        match params.task {
            Task::LanguageModel => {
                let tokens = token_rows(&cache.states)?;
                let logits = lm_logits(&cache.states, params)?;
                let mut ce = cross_entropy_sum(&logits, targets, mask)?;
                loss_sum += ce.loss_sum;
                ce.dlogits.scale(norm);
                grads.head_weight.add_assign(&matmul_tn(&tokens, &ce.dlogits)?)?;
                grads.head_bias.add_assign(&column_sums(&ce.dlogits))?;
                let d_tokens = matmul_nt(&ce.dlogits, &params.head_weight)?;
                d_states.data_mut()[..d_tokens.len()].copy_from_slice(d_tokens.data());
            }
            Task::Classification => {
                let root = cache.states.rows() - 1;
                let mut r = Matrix::from_vec(1, params.d_model(), cache.states.row(root).to_vec())?;
                let cls_mask = dropout.as_deref_mut().and_then(|d| {
                    let p = d.rates.classifier;
                    d.mask::<T>(r.len(), p)
                });
                if let Some(m) = &cls_mask {
                    apply_mask(r.data_mut(), m);
                }
                let mut logits = matmul(&r, &params.head_weight)?;
                crate::numeric::add_row_bias(&mut logits, &params.head_bias)?;
                let mut ce = cross_entropy_sum(&logits, targets, mask)?;
                loss_sum += ce.loss_sum;
                ce.dlogits.scale(norm);
                grads.head_weight.add_assign(&matmul_tn(&r, &ce.dlogits)?)?;
                grads.head_bias.add_assign(&ce.dlogits)?;
                let mut dr = matmul_nt(&ce.dlogits, &params.head_weight)?;
                if let Some(m) = &cls_mask {
                    apply_mask(dr.data_mut(), m);
                }
                d_states.row_mut(root).copy_from_slice(dr.data());
            }
        }
        backward(&cache, params, graph, d_states, &mut grads)?;
    }
    let loss = loss_sum * norm;
    if !loss.is_finite() {
        bail!(Training, "non-finite loss {loss}");
    }
    Ok((loss, grads))
}

fn accumulate_layer<T: Real>(
    acc: &mut LayerParams<T>,
    attn: &crate::attention::AttentionParams<T>,
    ffn: &crate::numeric::FfnParams<T>,
    norms: [&Matrix<T>; 4],
) -> Result<()> {
    acc.attention.wq.add_assign(&attn.wq)?;
    acc.attention.wk.add_assign(&attn.wk)?;
    acc.attention.wv.add_assign(&attn.wv)?;
    acc.attention.wo.add_assign(&attn.wo)?;
    acc.attention.relations.add_assign(&attn.relations)?;
    acc.ffn.w1.add_assign(&ffn.w1)?;
    acc.ffn.b1.add_assign(&ffn.b1)?;
    acc.ffn.w2.add_assign(&ffn.w2)?;
    acc.ffn.b2.add_assign(&ffn.b2)?;
    acc.norm1_gain.add_assign(norms[0])?;
    acc.norm1_bias.add_assign(norms[1])?;
    acc.norm2_gain.add_assign(norms[2])?;
    acc.norm2_bias.add_assign(norms[3])?;
    Ok(())
}

/// Backpropagates `d_states` (gradient w.r.t. the final node states) through
/// every layer and the embeddings, adding into `grads`.
pub fn backward<T: Real>(
    cache: &ForwardCache<T>,
    params: &ModelParams<T>,
    graph: &BpGraph,
    d_states: Matrix<T>,
    grads: &mut ModelParams<T>,
) -> Result<()> {
    if cache.layers.len() != params.layers.len() {
        bail!(InvalidInput, "forward cache has {} layers, model has {}", cache.layers.len(), params.layers.len());
    }
    let mut dh = d_states;
    for (i, (lc, layer)) in cache.layers.iter().zip(&params.layers).enumerate().rev() {
        let (dx2, dg2, db2) = layer_norm_backward(&lc.norm2, &layer.norm2_gain, &dh)?;
        let mut df = dx2.clone();
        if let Some(m) = &lc.ffn_mask {
            apply_mask(df.data_mut(), m);
        }
        let (mut dz, d_ffn) = ffn_backward(&lc.ffn, &layer.ffn, &df)?;
        dz.add_assign(&dx2)?;

        let (dx1, dg1, db1) = layer_norm_backward(&lc.norm1, &layer.norm1_gain, &dz)?;
        let mut da = dx1.clone();
        if let Some(m) = &lc.attn_mask {
            apply_mask(da.data_mut(), m);
        }
        let (mut d_input, d_attn) = gsa_backward(graph, &lc.input, &layer.attention, &lc.gsa, &da)?;
        d_input.add_assign(&dx1)?;
        accumulate_layer(&mut grads.layers[i], &d_attn, &d_ffn, [&dg1, &db1, &dg2, &db2])?;
        dh = d_input;
    }
    if let Some(m) = &cache.input_mask {
        apply_mask(dh.data_mut(), m);
    }
    for (t, &id) in cache.tokens.iter().enumerate() {
        if id == PAD_ID {
            continue;
        }
        let row = grads.embedding.row_mut(id as usize);
        for (g, &x) in row.iter_mut().zip(dh.row(t)) {
            *g += x;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::model::RunConfig;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lm_config() -> RunConfig {
        RunConfig { n_max: 16, k: 2, d_model: 16, heads: 2, d_ff: 32, vocab_size: 9, ..RunConfig::default() }
    }

    fn cls_config() -> RunConfig {
        RunConfig {
            n_max: 16,
            d_model: 16,
            heads: 2,
            d_ff: 32,
            vocab_size: 9,
            num_classes: 3,
            ..RunConfig::classification()
        }
    }

    #[test]
    fn all_pad_input_gives_zero_states() {
        let cfg = lm_config();
        let p = ModelParams::<f64>::init(&cfg, 1).unwrap();
        let shape = TreeShape::new(8).unwrap();
        let h = init_states(&[PAD_ID; 8], &p, &shape).unwrap();
        assert!(h.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_token_states_are_its_embedding() {
        let cfg = lm_config();
        let p = ModelParams::<f64>::init(&cfg, 1).unwrap();
        let shape = TreeShape::new(1).unwrap();
        let h = init_states(&[4], &p, &shape).unwrap();
        assert_eq!(h.shape(), (1, 16));
        assert_eq!(h.row(0), p.embedding.row(4));
    }

    #[test]
    fn span_rows_start_at_zero() {
        let p = ModelParams::<f64>::init(&lm_config(), 1).unwrap();
        let shape = TreeShape::new(8).unwrap();
        let h = init_states(&[1, 2, 3, 4, 5, 6, 7, 8], &p, &shape).unwrap();
        for r in 8..shape.node_count() {
            assert!(h.row(r).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn unknown_token_rejected() {
        let p = ModelParams::<f64>::init(&lm_config(), 1).unwrap();
        let shape = TreeShape::new(4).unwrap();
        assert!(matches!(init_states(&[1, 9], &p, &shape), Err(Error::Vocabulary { id: 9, vocab: 9 })));
    }

    #[test]
    fn graph_mismatches_rejected() {
        let p = ModelParams::<f64>::init(&lm_config(), 1).unwrap();
        let bi = build_graph(8, 2, Mode::Bidirectional).unwrap();
        assert!(matches!(forward(&[1, 2], &p, &bi), Err(Error::Config(_))));
        let other_k = build_graph(8, 3, Mode::Causal).unwrap();
        assert!(matches!(forward(&[1, 2], &p, &other_k), Err(Error::Config(_))));
        let too_long = build_graph(32, 2, Mode::Causal).unwrap();
        assert!(matches!(forward(&[1, 2], &p, &too_long), Err(Error::Config(_))));
    }

    #[test]
    fn head_mode_mismatch() {
        let lm = ModelParams::<f64>::init(&lm_config(), 1).unwrap();
        let cls = ModelParams::<f64>::init(&cls_config(), 1).unwrap();
        let states = Matrix::zeros(15, 16);
        assert!(matches!(cls_logits(&states, &lm), Err(Error::Config(_))));
        assert!(matches!(lm_logits(&states, &cls), Err(Error::Config(_))));
    }

    #[test]
    fn forward_is_deterministic() {
        let p = ModelParams::<f64>::init(&lm_config(), 3).unwrap();
        let g = build_graph(16, 2, Mode::Causal).unwrap();
        let toks: Vec<u32> = (0..16).map(|i| 1 + (i * 5 % 8) as u32).collect();
        assert_eq!(forward(&toks, &p, &g).unwrap(), forward(&toks, &p, &g).unwrap());
    }

    #[test]
    fn future_tokens_do_not_change_past_logits() {
        let p = ModelParams::<f64>::init(&lm_config(), 5).unwrap();
        let g = build_graph(16, 2, Mode::Causal).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let toks: Vec<u32> = (0..16).map(|_| rng.gen_range(1..9)).collect();
        let base = lm_logits(&forward(&toks, &p, &g).unwrap(), &p).unwrap();
        for j in 1..16 {
            let mut t2 = toks.clone();
            t2[j] = 1 + (t2[j] % 8);
            let other = lm_logits(&forward(&t2, &p, &g).unwrap(), &p).unwrap();
            for t in 0..j {
                assert_eq!(base.row(t), other.row(t), "position {t} changed by token {j}");
            }
            assert_ne!(base.row(j), other.row(j));
        }
    }

    #[test]
    fn zero_classifier_gives_uniform_probabilities() {
        let mut p = ModelParams::<f64>::init(&cls_config(), 2).unwrap();
        p.head_weight.fill(0.0);
        let g = build_graph(16, 4, Mode::Bidirectional).unwrap();
        let logits = cls_logits(&forward(&[1, 2, 3], &p, &g).unwrap(), &p).unwrap();
        assert!(logits.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_word_vocabulary_has_zero_loss() {
        let cfg = RunConfig { vocab_size: 1, ..lm_config() };
        let p = ModelParams::<f64>::init(&cfg, 2).unwrap();
        let g = build_graph(8, 2, Mode::Causal).unwrap();
        let sample = Sample::Lm { tokens: vec![0; 8], targets: vec![0; 8], mask: vec![true; 8] };
        let (loss, _) = loss_and_grads(&[sample], &p, &g, None).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn duplicated_batch_keeps_mean_loss() {
        let p = ModelParams::<f64>::init(&lm_config(), 2).unwrap();
        let g = build_graph(8, 2, Mode::Causal).unwrap();
        let s = Sample::Lm {
            tokens: vec![1, 2, 3, 4, 5, 6, 7, 8],
            targets: vec![2, 3, 4, 5, 6, 7, 8, 1],
            mask: vec![true; 8],
        };
        let (one, g1) = loss_and_grads(core::slice::from_ref(&s), &p, &g, None).unwrap();
        let (two, g2) = loss_and_grads(&[s.clone(), s], &p, &g, None).unwrap();
        assert!((one - two).abs() < 1e-14);
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            assert!(a.max_abs_diff(b) < 1e-14);
        }
    }

    #[test]
    fn fully_masked_batch_rejected() {
        let p = ModelParams::<f64>::init(&lm_config(), 2).unwrap();
        let g = build_graph(8, 2, Mode::Causal).unwrap();
        let s = Sample::Lm { tokens: vec![1; 8], targets: vec![1; 8], mask: vec![false; 8] };
        assert!(matches!(loss_and_grads(&[s], &p, &g, None), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn root_sees_every_token() {
        let p = ModelParams::<f64>::init(&cls_config(), 4).unwrap();
        let g = build_graph(16, 4, Mode::Bidirectional).unwrap();
        let toks: Vec<u32> = (0..12).map(|i| 1 + (i % 8) as u32).collect();
        let base = forward(&toks, &p, &g).unwrap();
        let root = g.shape().root_id();
        for j in 0..12 {
            let mut t2 = toks.clone();
            t2[j] = 1 + (t2[j] % 8);
            let other = forward(&t2, &p, &g).unwrap();
            assert_ne!(base.row(root), other.row(root));
        }
    }
}
