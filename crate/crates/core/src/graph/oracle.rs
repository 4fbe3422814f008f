//! Independent edge enumeration used to cross-check [`build_graph`].
//!
//! Works in 1-based node indices with the start-index recursion
//! `p_0 = i + 1`, `p_{l+1} = parent(p_l + k)` (or `parent(p_l + k + 1)` when
//! `p_l + k - 1` is odd and the following node is added too), where
//! `parent(x) = ceil(x / 2)`. Left context is obtained by reflecting the
//! right context of the mirrored token. Node ids come from the closed form
//! `offset(l) = 2n - 2n / 2^l`. None of this shares code with the level walk
//! in `contextual_nodes`.
//!
//! [`build_graph`]: super::build_graph

use alloc::vec::Vec;

use super::build::Mode;
use super::relation::{RelationId, Side};
use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeCounts {
    pub self_loops: usize,
    pub anc: usize,
    pub ctx_left: usize,
    pub ctx_right: usize,
}

impl EdgeCounts {
    pub fn ctx(&self) -> usize {
        self.ctx_left + self.ctx_right
    }

    pub fn total(&self) -> usize {
        self.self_loops + self.anc + self.ctx()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct OracleEdge {
    pub dst: usize,
    pub src: usize,
    pub relation: RelationId,
}

fn padded(n_tokens: usize) -> Result<usize> {
    if n_tokens == 0 {
        bail!(InvalidInput, "sequence must contain at least one token");
    }
    let mut n = 1;
    while n < n_tokens {
        n *= 2;
    }
    Ok(n)
}

fn flat_id(n: usize, level: u32, index0: usize) -> usize {
    2 * n - ((2 * n) >> level) + index0
}

/// Right context of 1-based token `pos` as `(level, 1-based index, join)`.
fn right_walk(n: usize, k: usize, pos: usize) -> Vec<(u32, usize, u32)> {
    let mut out = Vec::new();
    let mut p = pos + 1;
    let mut level = 0u32;
    let mut width = n;
    while width >= 1 && p <= width {
        let last = (p + k - 1).min(width);
        let mut join = 0;
        for m in p..=last {
            join += 1;
            out.push((level, m, join));
        }
        let mut next = last + 1;
        if last % 2 == 1 && last < width {
            join += 1;
            out.push((level, last + 1, join));
            next += 1;
        }
        p = next.div_ceil(2);
        level += 1;
        width /= 2;
    }
    out
}

/// Every edge of the graph for `(n_tokens, k, mode)`, sorted by destination
/// and then in canonical predecessor order.
pub fn enumerate_edges_oracle(n_tokens: usize, k: usize, mode: Mode) -> Result<Vec<OracleEdge>> {
    let n = padded(n_tokens)?;
    if k == 0 {
        bail!(InvalidInput, "connection density k must be at least 1");
    }
    let levels = n.trailing_zeros() + 1;
    let mut edges = Vec::new();
    for i in 0..n {
        edges.push(OracleEdge { dst: i, src: i, relation: RelationId::SelfLoop });
        // Mirror: token i's left context is token (n - 1 - i)'s right context
        // reflected within each level.
        for (level, m1, join) in right_walk(n, k, n - i) {
            let width = n >> level;
            let index0 = width - m1;
            edges.push(OracleEdge {
                dst: i,
                src: flat_id(n, level, index0),
                relation: RelationId::Ctx { side: Side::Left, level, join },
            });
        }
        if mode == Mode::Bidirectional {
            for (level, m1, join) in right_walk(n, k, i + 1) {
                edges.push(OracleEdge {
                    dst: i,
                    src: flat_id(n, level, m1 - 1),
                    relation: RelationId::Ctx { side: Side::Right, level, join },
                });
            }
        }
    }
    for level in 1..levels {
        for m in 0..(n >> level) {
            let dst = flat_id(n, level, m);
            edges.push(OracleEdge { dst, src: dst, relation: RelationId::SelfLoop });
            for t in 0..n {
                if t >> level == m {
                    edges.push(OracleEdge { dst, src: t, relation: RelationId::Anc { level } });
                }
            }
        }
    }
    Ok(edges)
}

/// Per-category edge counts from [`enumerate_edges_oracle`].
pub fn count_edges_oracle(n_tokens: usize, k: usize, mode: Mode) -> Result<EdgeCounts> {
    let mut counts = EdgeCounts::default();
    for e in enumerate_edges_oracle(n_tokens, k, mode)? {
        match e.relation {
            RelationId::SelfLoop => counts.self_loops += 1,
            RelationId::Anc { .. } => counts.anc += 1,
            RelationId::Ctx { side: Side::Left, .. } => counts.ctx_left += 1,
            RelationId::Ctx { side: Side::Right, .. } => counts.ctx_right += 1,
        }
    }
    Ok(counts)
}
