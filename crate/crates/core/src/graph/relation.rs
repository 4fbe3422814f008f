//! Symbolic edge labels and their rows in a relation-embedding table.

use core::fmt;
use core::str::FromStr;

use crate::error::{bail, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Left,
    Right,
}

/// Label of a directed edge `v -> u`.
///
/// `Ctx` nodes are numbered in the order they join `u`'s context at a level,
/// starting from 1; the alignment extension takes index `k + 1` at most.
/// `Anc(j)` labels the edge from a token to its level-`j` ancestor span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelationId {
    SelfLoop,
    Ctx { side: Side, level: u32, join: u32 },
    Anc { level: u32 },
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RelationId::SelfLoop => f.write_str("self"),
            RelationId::Ctx { side: Side::Left, level, join } => write!(f, "left({level},{join})"),
            RelationId::Ctx { side: Side::Right, level, join } => write!(f, "right({level},{join})"),
            RelationId::Anc { level } => write!(f, "anc({level})"),
        }
    }
}

impl FromStr for RelationId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(alloc::format!("malformed relation label {s:?}"));
        if s == "self" {
            return Ok(RelationId::SelfLoop);
        }
        let (head, rest) = s.split_once('(').ok_or_else(bad)?;
        let args = rest.strip_suffix(')').ok_or_else(bad)?;
        let mut nums = args.split(',').map(|a| a.trim().parse::<u32>().map_err(|_| bad()));
        let rel = match head {
            "anc" => RelationId::Anc { level: nums.next().ok_or_else(bad)?? },
            "left" | "right" => {
                let side = if head == "left" { Side::Left } else { Side::Right };
                let level = nums.next().ok_or_else(bad)??;
                let join = nums.next().ok_or_else(bad)??;
                RelationId::Ctx { side, level, join }
            }
            _ => return Err(bad()),
        };
        if nums.next().is_some() {
            return Err(bad());
        }
        Ok(rel)
    }
}

/// Maps relation labels onto rows of a table sized for a maximum tree depth.
///
/// Row 0 is `SelfLoop`, then `(k + 1)` rows per context level for the left
/// side, the same for the right side, then one row per ancestor level. The
/// layout only depends on `(k, levels)`, so a table built for `n_max` serves
/// every shorter padded length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelationLayout {
    k: u32,
    levels: u32,
}

impl RelationLayout {
    pub fn new(k: usize, levels: u32) -> Result<Self> {
        if k == 0 {
            bail!(InvalidInput, "connection density k must be at least 1");
        }
        if levels == 0 {
            bail!(InvalidInput, "tree needs at least one level");
        }
        let Ok(k) = u32::try_from(k) else {
            bail!(InvalidInput, "k = {k} too large");
        };
        Ok(Self { k, levels })
    }

    pub fn k(&self) -> usize {
        self.k as usize
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    /// Levels that can hold context nodes (every level below the root).
    pub fn ctx_levels(&self) -> u32 {
        self.levels - 1
    }

    /// `1 + 2 (k + 1) L_ctx + (L - 1)`.
    pub fn len(&self) -> usize {
        let per_side = (self.k as usize + 1) * self.ctx_levels() as usize;
        1 + 2 * per_side + (self.levels as usize - 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, rel: RelationId) -> Option<usize> {
        let slots = self.k as usize + 1;
        let per_side = slots * self.ctx_levels() as usize;
        match rel {
            RelationId::SelfLoop => Some(0),
            RelationId::Ctx { side, level, join } => {
                if level >= self.ctx_levels() || join == 0 || join as usize > slots {
                    return None;
                }
                let side_off = match side {
                    Side::Left => 0,
                    Side::Right => per_side,
                };
                Some(1 + side_off + level as usize * slots + (join as usize - 1))
            }
            RelationId::Anc { level } => {
                if level == 0 || level >= self.levels {
                    return None;
                }
                Some(1 + 2 * per_side + (level as usize - 1))
            }
        }
    }

    /// Inverse of [`index`](Self::index).
    pub fn relation(&self, row: usize) -> Option<RelationId> {
        let slots = self.k as usize + 1;
        let per_side = slots * self.ctx_levels() as usize;
        if row == 0 {
            return Some(RelationId::SelfLoop);
        }
        let r = row - 1;
        if r < 2 * per_side {
            let side = if r < per_side { Side::Left } else { Side::Right };
            let r = r % per_side;
            return Some(RelationId::Ctx { side, level: (r / slots) as u32, join: (r % slots) as u32 + 1 });
        }
        let r = r - 2 * per_side;
        (r < self.levels as usize - 1).then(|| RelationId::Anc { level: r as u32 + 1 })
    }
}
