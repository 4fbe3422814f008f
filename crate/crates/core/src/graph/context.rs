//! Fine-to-coarse context of a token.
//!
//! Starting next to the token, each level contributes up to `k` consecutive
//! nodes. When the walk would ascend from a position that is not aligned with
//! a parent boundary, one more node is taken at the same level so that the
//! parent of the next uncovered node starts exactly where this level stopped.
//! The nodes emitted on both sides, plus the token itself, tile the padded
//! sequence.

use alloc::vec::Vec;

use super::relation::{RelationId, Side};
use super::tree::{NodeRef, TreeShape};
use crate::error::{bail, Result};

/// Context nodes of token `i` on one side, finest level first, each labeled
/// with its level and join order.
pub fn contextual_nodes(i: usize, k: usize, shape: &TreeShape, side: Side) -> Result<Vec<(NodeRef, RelationId)>> {
    if i >= shape.n_padded() {
        bail!(InvalidInput, "token {i} outside padded length {}", shape.n_padded());
    }
    if k == 0 {
        bail!(InvalidInput, "connection density k must be at least 1");
    }
    let mut out = Vec::new();
    match side {
        Side::Right => right_context(i, k, shape, &mut out),
        Side::Left => left_context(i, k, shape, &mut out),
    }
    Ok(out)
}

fn push(out: &mut Vec<(NodeRef, RelationId)>, side: Side, level: u32, index: usize, join: usize) {
    out.push((NodeRef::new(level, index), RelationId::Ctx { side, level, join: join as u32 }));
}

fn right_context(i: usize, k: usize, shape: &TreeShape, out: &mut Vec<(NodeRef, RelationId)>) {
    let mut start = i + 1;
    for level in 0..shape.levels() {
        let width = shape.width(level);
        if start >= width {
            break;
        }
        let end = (start + k).min(width);
        let mut join = 0;
        for m in start..end {
            join += 1;
            push(out, Side::Right, level, m, join);
        }
        let mut next = end;
        // `next` odd means it is a right child whose sibling is already taken.
        if next % 2 == 1 && next < width {
            join += 1;
            push(out, Side::Right, level, next, join);
            next += 1;
        }
        start = next / 2;
    }
}

fn left_context(i: usize, k: usize, shape: &TreeShape, out: &mut Vec<(NodeRef, RelationId)>) {
    // `start` is one past the rightmost node still to take at this level.
    let mut start = i;
    for level in 0..shape.levels() {
        if start == 0 {
            break;
        }
        let stop = start.saturating_sub(k);
        let mut join = 0;
        for m in (stop..start).rev() {
            join += 1;
            push(out, Side::Left, level, m, join);
        }
        let mut leftmost = stop;
        if leftmost % 2 == 1 {
            join += 1;
            leftmost -= 1;
            push(out, Side::Left, level, leftmost, join);
        }
        start = leftmost / 2;
    }
}
