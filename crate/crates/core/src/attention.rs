//! Multi-head graph self-attention.
//!
//! For every destination node `u` and head `i`, the logits over `u`'s
//! predecessors `v` are `q_i(u) · (k_i(v) + r(v, u)) / sqrt(d / h)`, where `r`
//! is the relation embedding of the edge label, shared by all heads. The
//! softmax runs per destination segment of the compressed adjacency; values
//! are gathered from the predecessors and the concatenated heads are projected
//! by `W^O`.

use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::error::{bail, Error, Result};
use crate::graph::{BpGraph, DegreeStats, RelationLayout};
use crate::numeric::{dropout_mask, matmul, matmul_grad, softmax_backward_into, softmax_segments_into, Matrix};
use crate::Real;

/// Weights of one attention layer. Head `i` owns columns
/// `i * d_head .. (i + 1) * d_head` of `wq`, `wk` and `wv`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<T> {
    pub wq: Matrix<T>,
    pub wk: Matrix<T>,
    pub wv: Matrix<T>,
    pub wo: Matrix<T>,
    /// One row of width `d_head` per relation label, indexed by `layout`.
    pub relations: Matrix<T>,
    pub heads: usize,
    pub layout: RelationLayout,
}

impl<T: Real> AttentionParams<T> {
    pub fn zeros(d: usize, heads: usize, layout: RelationLayout) -> Result<Self> {
        if heads == 0 || !d.is_multiple_of(heads) {
            bail!(Config, "{heads} heads do not divide model width {d}");
        }
        Ok(Self {
            wq: Matrix::zeros(d, d),
            wk: Matrix::zeros(d, d),
            wv: Matrix::zeros(d, d),
            wo: Matrix::zeros(d, d),
            relations: Matrix::zeros(layout.len(), d / heads),
            heads,
            layout,
        })
    }

    pub fn d_model(&self) -> usize {
        self.wq.rows()
    }

    pub fn head_dim(&self) -> usize {
        self.d_model() / self.heads
    }

    fn check(&self) -> Result<()> {
        let d = self.d_model();
        if self.heads == 0 || !d.is_multiple_of(self.heads) {
            bail!(Config, "{} heads do not divide model width {d}", self.heads);
        }
        for (name, m) in [("wq", &self.wq), ("wk", &self.wk), ("wv", &self.wv), ("wo", &self.wo)] {
            if m.shape() != (d, d) {
                bail!(Shape, "{name} is {:?}, expected {d}x{d}", m.shape());
            }
        }
        if self.relations.shape() != (self.layout.len(), self.head_dim()) {
            bail!(
                Shape,
                "relation table {:?}, expected {}x{}",
                self.relations.shape(),
                self.layout.len(),
                self.head_dim()
            );
        }
        Ok(())
    }
}

/// Attention weights of one forward call.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace<T> {
    pub heads: usize,
    pub edges: usize,
    pub nodes: usize,
    /// Head-major: weight of edge `e` in head `i` is `weights[i * edges + e]`.
    pub weights: Vec<T>,
    /// Log-sum-exp of the scaled logits, `lse[i * nodes + u]`.
    pub lse: Vec<T>,
}

impl<T: Real> AttentionTrace<T> {
    pub fn weight(&self, head: usize, edge: usize) -> T {
        self.weights[head * self.edges + edge]
    }

    pub fn head_weights(&self, head: usize) -> &[T] {
        &self.weights[head * self.edges..(head + 1) * self.edges]
    }
}

/// Everything the backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct GsaCache<T> {
    pub trace: AttentionTrace<T>,
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
    context: Matrix<T>,
    rel_rows: Vec<usize>,
    /// Dropout mask over `trace.weights`, when attention dropout was active.
    weight_mask: Option<Vec<T>>,
}

fn relation_rows<T: Real>(graph: &BpGraph, params: &AttentionParams<T>) -> Result<Vec<usize>> {
    graph
        .relations()
        .iter()
        .map(|&rel| {
            params
                .layout
                .index(rel)
                .ok_or_else(|| Error::Config(alloc::format!("relation {rel} has no row in the relation table")))
        })
        .collect()
}

/// Forward pass over all nodes. `dropout` is the attention-weight dropout
/// rate and its random source; pass `None` for deterministic evaluation.
pub fn gsa_forward<T: Real>(
    graph: &BpGraph,
    h: &Matrix<T>,
    params: &AttentionParams<T>,
    dropout: Option<(f64, &mut dyn RngCore)>,
) -> Result<(Matrix<T>, GsaCache<T>)> {
    params.check()?;
    let nodes = graph.node_count();
    if h.rows() != nodes || h.cols() != params.d_model() {
        bail!(Shape, "node states {:?} for {nodes} nodes of width {}", h.shape(), params.d_model());
    }
    let rel_rows = relation_rows(graph, params)?;
    let heads = params.heads;
    let dh = params.head_dim();
    let edges = graph.edge_count();
    let scale = T::one() / T::from_f64(dh as f64).sqrt();

    let q = matmul(h, &params.wq)?;
    let k = matmul(h, &params.wk)?;
    let v = matmul(h, &params.wv)?;

    let mut logits = vec![T::zero(); heads * edges];
    let srcs = graph.sources();
    for u in 0..nodes {
        let qu = q.row(u);
        for e in graph.segment(u) {
            let kv = k.row(srcs[e]);
            let r = params.relations.row(rel_rows[e]);
            for head in 0..heads {
                let cols = head * dh..(head + 1) * dh;
                let mut s = T::zero();
                for ((&a, &b), &c) in qu[cols.clone()].iter().zip(&kv[cols]).zip(r) {
                    s += a * (b + c);
                }
                logits[head * edges + e] = s * scale;
            }
        }
    }

    let mut weights = vec![T::zero(); heads * edges];
    let mut lse = vec![T::zero(); heads * nodes];
    for head in 0..heads {
        softmax_segments_into(
            &logits[head * edges..(head + 1) * edges],
            graph.offsets(),
            &mut weights[head * edges..(head + 1) * edges],
            &mut lse[head * nodes..(head + 1) * nodes],
        );
    }

    let weight_mask = match dropout {
        Some((p, rng)) if p > 0.0 => Some(dropout_mask::<T>(weights.len(), p, rng)),
        _ => None,
    };

    let mut context = Matrix::zeros(nodes, params.d_model());
    for u in 0..nodes {
        let out = context.row_mut(u);
        for e in graph.segment(u) {
            let vv = v.row(srcs[e]);
            for head in 0..heads {
                let idx = head * edges + e;
                let mut w = weights[idx];
                if let Some(mask) = &weight_mask {
                    w *= mask[idx];
                }
                let cols = head * dh..(head + 1) * dh;
                for (o, &x) in out[cols.clone()].iter_mut().zip(&vv[cols]) {
                    *o += w * x;
                }
            }
        }
    }
    let out = matmul(&context, &params.wo)?;
    let trace = AttentionTrace { heads, edges, nodes, weights, lse };
    Ok((out, GsaCache { trace, q, k, v, context, rel_rows, weight_mask }))
}

/// Exact gradients of [`gsa_forward`]. Returns `(dH, dParams)`; relation rows
/// not used by any edge get exactly zero gradient.
pub fn gsa_backward<T: Real>(
    graph: &BpGraph,
    h: &Matrix<T>,
    params: &AttentionParams<T>,
    cache: &GsaCache<T>,
    d_out: &Matrix<T>,
) -> Result<(Matrix<T>, AttentionParams<T>)> {
    params.check()?;
    let nodes = graph.node_count();
    let edges = graph.edge_count();
    let heads = params.heads;
    let dh = params.head_dim();
    let d = params.d_model();
    let tr = &cache.trace;
    if tr.nodes != nodes
        || tr.edges != edges
        || tr.heads != heads
        || cache.q.shape() != (nodes, d)
        || cache.rel_rows.len() != edges
    {
        bail!(InvalidInput, "attention trace does not belong to this graph and layer");
    }
    if h.shape() != (nodes, d) || d_out.shape() != (nodes, d) {
        bail!(Shape, "states {:?} / upstream {:?} for {nodes} nodes of width {d}", h.shape(), d_out.shape());
    }
    let scale = T::one() / T::from_f64(dh as f64).sqrt();
    let srcs = graph.sources();

    let (d_context, d_wo) = matmul_grad(&cache.context, &params.wo, d_out)?;

    // Upstream into the attention weights, and value gradients.
    let mut d_weights = vec![T::zero(); heads * edges];
    let mut dv = Matrix::zeros(nodes, d);
    for u in 0..nodes {
        let dc = d_context.row(u);
        for e in graph.segment(u) {
            let src = srcs[e];
            for head in 0..heads {
                let idx = head * edges + e;
                let cols = head * dh..(head + 1) * dh;
                let vv = &cache.v.row(src)[cols.clone()];
                let mut g = T::zero();
                for (&a, &b) in dc[cols.clone()].iter().zip(vv) {
                    g += a * b;
                }
                let mut w = tr.weights[idx];
                if let Some(mask) = &cache.weight_mask {
                    g *= mask[idx];
                    w *= mask[idx];
                }
                d_weights[idx] = g;
                let dvr = &mut dv.row_mut(src)[cols.clone()];
                for (o, &x) in dvr.iter_mut().zip(&dc[cols]) {
                    *o += w * x;
                }
            }
        }
    }

    let mut d_logits = vec![T::zero(); heads * edges];
    for head in 0..heads {
        let r = head * edges..(head + 1) * edges;
        softmax_backward_into(&tr.weights[r.clone()], graph.offsets(), &d_weights[r.clone()], &mut d_logits[r]);
    }

    let mut dq = Matrix::zeros(nodes, d);
    let mut dk = Matrix::zeros(nodes, d);
    let mut d_rel = Matrix::zeros(params.relations.rows(), dh);
    for u in 0..nodes {
        for e in graph.segment(u) {
            let src = srcs[e];
            let rel = cache.rel_rows[e];
            for head in 0..heads {
                let g = d_logits[head * edges + e] * scale;
                if g == T::zero() {
                    continue;
                }
                let cols = head * dh..(head + 1) * dh;
                for c in 0..dh {
                    let col = cols.start + c;
                    let qu = cache.q.get(u, col);
                    let key = cache.k.get(src, col) + params.relations.get(rel, c);
                    dq.data_mut()[u * d + col] += g * key;
                    dk.data_mut()[src * d + col] += g * qu;
                    d_rel.data_mut()[rel * dh + c] += g * qu;
                }
            }
        }
    }

    let (mut dh_total, d_wq) = matmul_grad(h, &params.wq, &dq)?;
    let (dh_k, d_wk) = matmul_grad(h, &params.wk, &dk)?;
    let (dh_v, d_wv) = matmul_grad(h, &params.wv, &dv)?;
    dh_total.add_assign(&dh_k)?;
    dh_total.add_assign(&dh_v)?;

    Ok((
        dh_total,
        AttentionParams { wq: d_wq, wk: d_wk, wv: d_wv, wo: d_wo, relations: d_rel, heads, layout: params.layout },
    ))
}

/// Min/mean/max number of incoming edges over token nodes.
pub fn attention_degree(graph: &BpGraph) -> DegreeStats {
    graph.degree_stats()
}
