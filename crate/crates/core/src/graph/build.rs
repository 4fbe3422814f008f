use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::context::contextual_nodes;
use super::relation::{RelationId, Side};
use super::tree::{NodeRef, TreeShape};
use crate::error::{bail, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Tokens see only context to their left; right-context edges are dropped.
    Causal,
    Bidirectional,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Causal => "causal",
            Mode::Bidirectional => "bidirectional",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "causal" => Ok(Mode::Causal),
            "bi" | "bidirectional" => Ok(Mode::Bidirectional),
            _ => bail!(InvalidInput, "unknown mode {s:?} (expected causal or bi)"),
        }
    }
}

/// In-degree summary over token nodes plus the total edge count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub edges: usize,
}

/// Directed attention graph in compressed (per-destination) form.
///
/// Predecessors of node `u` occupy `offsets[u]..offsets[u + 1]` of `sources`
/// and `relations`. Order inside a segment: the self loop, left context
/// fine-to-coarse, right context fine-to-coarse, then contained tokens by
/// index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpGraph {
    shape: TreeShape,
    k: usize,
    mode: Mode,
    offsets: Vec<usize>,
    sources: Vec<usize>,
    relations: Vec<RelationId>,
}

pub fn build_graph(n_tokens: usize, k: usize, mode: Mode) -> Result<BpGraph> {
    let shape = TreeShape::new(n_tokens)?;
    if k == 0 {
        bail!(InvalidInput, "connection density k must be at least 1");
    }
    let n = shape.n_padded();
    let mut offsets = Vec::with_capacity(shape.node_count() + 1);
    let mut sources = Vec::new();
    let mut relations = Vec::new();
    offsets.push(0);

    for i in 0..n {
        sources.push(i);
        relations.push(RelationId::SelfLoop);
        let mut sides = alloc::vec![Side::Left];
        if mode == Mode::Bidirectional {
            sides.push(Side::Right);
        }
        for side in sides {
            for (node, rel) in contextual_nodes(i, k, &shape, side)? {
                sources.push(shape.node_id(node)?);
                relations.push(rel);
            }
        }
        offsets.push(sources.len());
    }
    for level in 1..shape.levels() {
        let size = 1usize << level;
        for m in 0..shape.width(level) {
            sources.push(shape.node_id(NodeRef::new(level, m))?);
            relations.push(RelationId::SelfLoop);
            for t in m * size..(m + 1) * size {
                sources.push(t);
                relations.push(RelationId::Anc { level });
            }
            offsets.push(sources.len());
        }
    }
    Ok(BpGraph { shape, k, mode, offsets, sources, relations })
}

impl BpGraph {
    /// Assembles a graph from per-destination predecessor lists, e.g. after
    /// deserialization. Node ids are checked; structure is taken as given.
    pub fn from_predecessors(
        shape: TreeShape,
        k: usize,
        mode: Mode,
        preds: Vec<Vec<(usize, RelationId)>>,
    ) -> Result<Self> {
        if preds.len() != shape.node_count() {
            bail!(InvalidInput, "{} predecessor lists for a tree of {} nodes", preds.len(), shape.node_count());
        }
        let mut offsets = Vec::with_capacity(preds.len() + 1);
        let mut sources = Vec::new();
        let mut relations = Vec::new();
        offsets.push(0);
        for list in preds {
            for (src, rel) in list {
                if src >= shape.node_count() {
                    bail!(InvalidInput, "edge source {src} outside tree");
                }
                sources.push(src);
                relations.push(rel);
            }
            offsets.push(sources.len());
        }
        Ok(Self { shape, k, mode, offsets, sources, relations })
    }

    pub fn shape(&self) -> &TreeShape {
        &self.shape
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn node_count(&self) -> usize {
        self.shape.node_count()
    }

    pub fn edge_count(&self) -> usize {
        self.sources.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn relations(&self) -> &[RelationId] {
        &self.relations
    }

    /// Edge index range holding the predecessors of `dst`.
    pub fn segment(&self, dst: usize) -> core::ops::Range<usize> {
        self.offsets[dst]..self.offsets[dst + 1]
    }

    pub fn predecessors(&self, dst: usize) -> impl Iterator<Item = (usize, RelationId)> + '_ {
        let seg = self.segment(dst);
        self.sources[seg.clone()].iter().copied().zip(self.relations[seg].iter().copied())
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Token-node in-degree summary (the attention degree of each token).
    pub fn degree_stats(&self) -> DegreeStats {
        let n = self.shape.n_padded();
        let degrees = (0..n).map(|i| self.in_degree(i));
        let (min, max, sum) = degrees.fold((usize::MAX, 0, 0), |(lo, hi, s), d| (lo.min(d), hi.max(d), s + d));
        DegreeStats { min, max, mean: sum as f64 / n as f64, edges: self.edge_count() }
    }

    /// Every edge as `(src, dst, relation)` in storage order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, RelationId)> + '_ {
        (0..self.node_count()).flat_map(move |dst| self.predecessors(dst).map(move |(src, rel)| (src, dst, rel)))
    }
}
