//! JSON and DOT renderings of attention graphs and traces.

use std::fmt::Write as _;

use bpt_core::attention::AttentionTrace;
use bpt_core::graph::{BpGraph, Mode, RelationId, TreeShape};
use bpt_core::Real;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    Json,
    Dot,
}

impl std::str::FromStr for GraphFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(GraphFormat::Json),
            "dot" => Ok(GraphFormat::Dot),
            _ => Err(HarnessError::Usage(format!("unknown graph format {s:?} (expected json or dot)"))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    level: u32,
    index: usize,
    is_pad: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRecord {
    src: usize,
    dst: usize,
    relation: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphRecord {
    n_tokens: usize,
    n_padded: usize,
    k: usize,
    mode: String,
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Causal => "causal",
        Mode::Bidirectional => "bi",
    }
}

fn node_records(shape: &TreeShape) -> Vec<NodeRecord> {
    shape
        .nodes()
        .enumerate()
        .map(|(id, node)| NodeRecord {
            id,
            level: node.level,
            index: node.index,
            is_pad: node.level == 0 && shape.is_pad(node.index),
        })
        .collect()
}

/// Nodes by id, then edges in per-destination order.
pub fn graph_to_json(graph: &BpGraph) -> String {
    let shape = graph.shape();
    let record = GraphRecord {
        n_tokens: shape.n_tokens(),
        n_padded: shape.n_padded(),
        k: graph.k(),
        mode: mode_name(graph.mode()).to_owned(),
        nodes: node_records(shape),
        edges: graph.edges().map(|(src, dst, rel)| EdgeRecord { src, dst, relation: rel.to_string() }).collect(),
    };
    let mut s = serde_json::to_string_pretty(&record).expect("graph records always serialize");
    s.push('\n');
    s
}

pub fn graph_from_json(text: &str) -> Result<BpGraph> {
    let record: GraphRecord = serde_json::from_str(text).map_err(|e| HarnessError::Data(format!("graph JSON: {e}")))?;
    let shape = TreeShape::new(record.n_tokens)?;
    if shape.n_padded() != record.n_padded || record.nodes.len() != shape.node_count() {
        return Err(HarnessError::Data("graph JSON header disagrees with its node list".into()));
    }
    let mode: Mode = record.mode.parse()?;
    let mut preds = vec![Vec::new(); shape.node_count()];
    for e in record.edges {
        let rel: RelationId = e.relation.parse()?;
        let list = preds
            .get_mut(e.dst)
            .ok_or_else(|| HarnessError::Data(format!("edge destination {} outside the tree", e.dst)))?;
        list.push((e.src, rel));
    }
    Ok(BpGraph::from_predecessors(shape, record.k, mode, preds)?)
}

fn dot_name(shape: &TreeShape, id: usize) -> String {
    let node = shape.node_at(id).expect("node ids come from the graph");
    if node.level == 0 {
        format!("t{}", node.index)
    } else {
        format!("s{}_{}", node.level, node.index)
    }
}

pub fn graph_to_dot(graph: &BpGraph) -> String {
    let shape = graph.shape();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "digraph bpt {{\n  // n_tokens={} n_padded={} k={} mode={}",
        shape.n_tokens(),
        shape.n_padded(),
        graph.k(),
        mode_name(graph.mode())
    );
    for (id, node) in shape.nodes().enumerate() {
        let name = dot_name(shape, id);
        let style = if node.level == 0 && shape.is_pad(node.index) {
            ", style=dashed"
        } else if node.level > 0 {
            ", shape=box"
        } else {
            ""
        };
        let _ = writeln!(out, "  {name} [label=\"{name}\"{style}];");
    }
    for (src, dst, rel) in graph.edges() {
        let _ = writeln!(out, "  {} -> {} [label=\"{rel}\"];", dot_name(shape, src), dot_name(shape, dst));
    }
    out.push_str("}\n");
    out
}

pub fn export_graph(graph: &BpGraph, format: GraphFormat) -> String {
    match format {
        GraphFormat::Json => graph_to_json(graph),
        GraphFormat::Dot => graph_to_dot(graph),
    }
}

#[derive(Debug, Serialize)]
struct TraceEdge {
    id: usize,
    src: usize,
    dst: usize,
    relation: String,
    weights: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct TraceLayer {
    layer: usize,
    heads: usize,
    edges: Vec<TraceEdge>,
}

/// Attention weight of every edge for every head, one record per layer.
pub fn traces_to_json<'a, T: Real>(graph: &BpGraph, traces: impl IntoIterator<Item = &'a AttentionTrace<T>>) -> String {
    let layers: Vec<TraceLayer> = traces
        .into_iter()
        .enumerate()
        .map(|(layer, trace)| TraceLayer {
            layer,
            heads: trace.heads,
            edges: graph
                .edges()
                .enumerate()
                .map(|(id, (src, dst, rel))| TraceEdge {
                    id,
                    src,
                    dst,
                    relation: rel.to_string(),
                    weights: (0..trace.heads).map(|h| trace.weight(h, id).to_f64()).collect(),
                })
                .collect(),
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&layers).expect("trace records always serialize");
    s.push('\n');
    s
}
