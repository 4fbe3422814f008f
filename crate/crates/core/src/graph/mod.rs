//! Binary-partition tree and the labeled attention graph over it.

mod build;
mod context;
mod oracle;
mod relation;
mod tree;

pub use build::{build_graph, BpGraph, DegreeStats, Mode};
pub use context::contextual_nodes;
pub use oracle::{count_edges_oracle, enumerate_edges_oracle, EdgeCounts, OracleEdge};
pub use relation::{RelationId, RelationLayout, Side};
pub use tree::{parent, span_range, NodeRef, TreeShape};
