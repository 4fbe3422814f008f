//! The perfect binary tree over a padded sequence.
//!
//! Nodes are addressed either by `(level, index)` ([`NodeRef`]) or by a flat
//! id. Flat ids enumerate level 0 first, so token `i` has id `i` and the root
//! has the last id, `2 * n_padded - 2`.

use core::ops::Range;

use crate::error::{bail, Result};

/// A tree node addressed by level (0 = tokens) and index within the level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef {
    pub level: u32,
    pub index: usize,
}

impl NodeRef {
    pub const fn new(level: u32, index: usize) -> Self {
        Self { level, index }
    }

    pub const fn token(index: usize) -> Self {
        Self { level: 0, index }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TreeShape {
    n_tokens: usize,
    n_padded: usize,
    levels: u32,
}

impl TreeShape {
    /// Pads `n_tokens` to the next power of two. Leaves past `n_tokens` are
    /// padding.
    pub fn new(n_tokens: usize) -> Result<Self> {
        if n_tokens == 0 {
            bail!(InvalidInput, "sequence must contain at least one token");
        }
        let Some(n_padded) = n_tokens.checked_next_power_of_two() else {
            bail!(InvalidInput, "sequence length {n_tokens} too large");
        };
        Ok(Self { n_tokens, n_padded, levels: n_padded.trailing_zeros() + 1 })
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn n_padded(&self) -> usize {
        self.n_padded
    }

    /// Number of levels, `log2(n_padded) + 1`.
    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn node_count(&self) -> usize {
        2 * self.n_padded - 1
    }

    pub fn padding(&self) -> usize {
        self.n_padded - self.n_tokens
    }

    pub fn is_pad(&self, token: usize) -> bool {
        token >= self.n_tokens
    }

    /// Number of nodes on `level` (0 when the level does not exist).
    pub fn width(&self, level: u32) -> usize {
        if level >= self.levels {
            0
        } else {
            self.n_padded >> level
        }
    }

    /// Flat id of the first node on `level`.
    pub fn level_offset(&self, level: u32) -> usize {
        (0..level).map(|l| self.n_padded >> l).sum()
    }

    pub fn root(&self) -> NodeRef {
        NodeRef::new(self.levels - 1, 0)
    }

    pub fn root_id(&self) -> usize {
        self.node_count() - 1
    }

    pub fn contains(&self, node: NodeRef) -> bool {
        node.index < self.width(node.level)
    }

    pub fn check(&self, node: NodeRef) -> Result<()> {
        if !self.contains(node) {
            bail!(
                InvalidInput,
                "node ({}, {}) outside tree with {} padded tokens",
                node.level,
                node.index,
                self.n_padded
            );
        }
        Ok(())
    }

    pub fn node_id(&self, node: NodeRef) -> Result<usize> {
        self.check(node)?;
        Ok(self.level_offset(node.level) + node.index)
    }

    pub fn node_at(&self, id: usize) -> Result<NodeRef> {
        let mut rest = id;
        for level in 0..self.levels {
            let width = self.width(level);
            if rest < width {
                return Ok(NodeRef::new(level, rest));
            }
            rest -= width;
        }
        bail!(InvalidInput, "node id {id} outside tree of {} nodes", self.node_count())
    }

    /// Every node in flat-id order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeRef> + '_ {
        (0..self.levels).flat_map(move |l| (0..self.width(l)).map(move |m| NodeRef::new(l, m)))
    }
}

/// `(l + 1, m / 2)`, or `None` for the root.
pub fn parent(node: NodeRef, shape: &TreeShape) -> Result<Option<NodeRef>> {
    shape.check(node)?;
    if node.level + 1 == shape.levels() {
        return Ok(None);
    }
    Ok(Some(NodeRef::new(node.level + 1, node.index / 2)))
}

/// Half-open token range `[m * 2^l, (m + 1) * 2^l)` covered by a node.
pub fn span_range(node: NodeRef, shape: &TreeShape) -> Result<Range<usize>> {
    shape.check(node)?;
    let size = 1usize << node.level;
    Ok(node.index * size..(node.index + 1) * size)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_token_is_its_own_root() {
        let shape = TreeShape::new(1).unwrap();
        assert_eq!(shape.node_count(), 1);
        assert_eq!(shape.levels(), 1);
        assert_eq!(shape.root(), NodeRef::token(0));
        assert_eq!(parent(shape.root(), &shape).unwrap(), None);
    }

    #[test]
    fn four_tokens() {
        let shape = TreeShape::new(4).unwrap();
        assert_eq!(shape.node_count(), 7);
        let widths: std::vec::Vec<_> = (0..shape.levels()).map(|l| shape.width(l)).collect();
        assert_eq!(widths, [4, 2, 1]);
    }

    #[test]
    fn six_tokens_pad_to_eight() {
        let shape = TreeShape::new(6).unwrap();
        assert_eq!(shape.n_padded(), 8);
        assert_eq!(shape.node_count(), 15);
        assert_eq!(shape.padding(), 2);
        assert!(!shape.is_pad(5));
        assert!(shape.is_pad(6) && shape.is_pad(7));
    }

    #[test]
    fn zero_tokens_rejected() {
        assert!(TreeShape::new(0).is_err());
    }

    #[test]
    fn parents() {
        let shape = TreeShape::new(8).unwrap();
        assert_eq!(parent(NodeRef::new(0, 5), &shape).unwrap(), Some(NodeRef::new(1, 2)));
        assert_eq!(parent(NodeRef::new(2, 1), &shape).unwrap(), Some(NodeRef::new(3, 0)));
        assert_eq!(parent(shape.root(), &shape).unwrap(), None);
        assert!(parent(NodeRef::new(1, 4), &shape).is_err());
        assert!(parent(NodeRef::new(4, 0), &shape).is_err());
    }

    #[test]
    fn spans() {
        let shape = TreeShape::new(8).unwrap();
        assert_eq!(span_range(NodeRef::new(2, 1), &shape).unwrap(), 4..8);
        assert_eq!(span_range(NodeRef::new(0, 3), &shape).unwrap(), 3..4);
        assert_eq!(span_range(shape.root(), &shape).unwrap(), 0..8);
    }

    #[test]
    fn ids_are_a_bijection() {
        for n in [1, 2, 3, 8, 13, 64] {
            let shape = TreeShape::new(n).unwrap();
            for (id, node) in shape.nodes().enumerate() {
                assert_eq!(shape.node_id(node).unwrap(), id);
                assert_eq!(shape.node_at(id).unwrap(), node);
            }
            assert_eq!(shape.nodes().count(), shape.node_count());
            assert_eq!(shape.node_id(shape.root()).unwrap(), shape.root_id());
            assert!(shape.node_at(shape.node_count()).is_err());
        }
    }
}
