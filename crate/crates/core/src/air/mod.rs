//! Application Intermediate Representation.
//!
//! An AIR is an acyclic control-flow graph that separates resource-aware
//! nodes (`get_resource`, `release_resource`) from functional nodes (FENs)
//! carrying a trace reference. Edges are guarded on the size of the claim
//! the application currently holds.

mod parse;
mod validate;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_air, print_air};
pub use validate::{reachable_claim_sizes, validate_air, ValidationReport, Violation};

#[derive(Debug, Error, PartialEq)]
pub enum AirError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    SyntaxError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("node `{node}` has unknown kind `{kind}`")]
    UnknownNodeKind { node: String, kind: String },
    #[error("node `{node}` is malformed: {reason}")]
    InvalidNode { node: String, reason: String },
    #[error("no node `{0}` in graph")]
    UnknownNode(String),
    #[error("no outgoing edge of `{node}` matches claim size {claim_size}")]
    NoMatchingEdge { node: String, claim_size: usize },
    #[error("several outgoing edges of `{node}` match claim size {claim_size}")]
    AmbiguousEdge { node: String, claim_size: usize },
}

/// Resource demand carried by a `get_resource` node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceDemand {
    pub min_cpus: usize,
    pub max_cpus: usize,
    #[serde(default)]
    pub max_load: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    GetResource(ResourceDemand),
    ReleaseResource,
    Fen { trace_ref: String },
}

impl NodeKind {
    pub fn label(&self) -> &'static str {
        match self {
            NodeKind::GetResource(_) => "get_resource",
            NodeKind::ReleaseResource => "release_resource",
            NodeKind::Fen { .. } => "fen",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AirNode {
    pub id: String,
    pub kind: NodeKind,
}

/// Predicate on the current claim size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Guard {
    Always,
    Default,
    Eq(usize),
    Ge(usize),
    In(usize, usize),
}

impl Guard {
    /// Whether an explicit guard admits `claim_size`. `Default` never
    /// matches explicitly; it is the fallback in [`select_edge`].
    pub fn matches(&self, claim_size: usize) -> bool {
        match *self {
            Guard::Always => true,
            Guard::Default => false,
            Guard::Eq(k) => claim_size == k,
            Guard::Ge(k) => claim_size >= k,
            Guard::In(lo, hi) => (lo..=hi).contains(&claim_size),
        }
    }

    pub fn is_default(&self) -> bool {
        matches!(self, Guard::Default)
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::Always => write!(f, "always"),
            Guard::Default => write!(f, "default"),
            Guard::Eq(k) => write!(f, "eq({k})"),
            Guard::Ge(k) => write!(f, "ge({k})"),
            Guard::In(lo, hi) => write!(f, "in({lo},{hi})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AirEdge {
    pub from: String,
    pub to: String,
    pub guard: Guard,
}

/// A parsed AIR. Node identifiers are interned into an index; edges keep the
/// textual endpoints so that dangling references survive parsing and are
/// reported by [`validate_air`].
#[derive(Debug, Clone)]
pub struct AirGraph {
    id: String,
    entry: String,
    nodes: Vec<AirNode>,
    edges: Vec<AirEdge>,
    index: HashMap<String, usize>,
}

impl PartialEq for AirGraph {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.entry == other.entry
            && self.nodes == other.nodes
            && self.edges == other.edges
    }
}

impl AirGraph {
    pub fn new(
        id: impl Into<String>,
        entry: impl Into<String>,
        nodes: Vec<AirNode>,
        edges: Vec<AirEdge>,
    ) -> Self {
        // First occurrence wins; duplicates are reported by validation.
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            index.entry(n.id.clone()).or_insert(i);
        }
        Self {
            id: id.into(),
            entry: entry.into(),
            nodes,
            edges,
            index,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn entry(&self) -> &str {
        &self.entry
    }

    pub fn nodes(&self) -> &[AirNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[AirEdge] {
        &self.edges
    }

    pub fn node(&self, id: &str) -> Option<&AirNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub(crate) fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn outgoing<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a AirEdge> + 'a {
        self.edges.iter().filter(move |e| e.from == id)
    }

    pub fn is_leaf(&self, id: &str) -> bool {
        self.outgoing(id).next().is_none()
    }

    /// Mutable access to a `get_resource` node's demand.
    pub fn demand_mut(&mut self, id: &str) -> Option<&mut ResourceDemand> {
        let i = *self.index.get(id)?;
        match &mut self.nodes[i].kind {
            NodeKind::GetResource(d) => Some(d),
            _ => None,
        }
    }

    /// Trace references of every FEN node, in node order.
    pub fn trace_refs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.nodes.iter().filter_map(|n| match &n.kind {
            NodeKind::Fen { trace_ref } => Some((n.id.as_str(), trace_ref.as_str())),
            _ => None,
        })
    }
}

/// Picks the successor of `node` for the given claim size.
pub fn select_edge<'a>(
    graph: &'a AirGraph,
    node: &str,
    claim_size: usize,
) -> Result<&'a str, AirError> {
    if graph.node(node).is_none() {
        return Err(AirError::UnknownNode(node.to_string()));
    }
    let mut explicit = None;
    let mut fallback = None;
    for edge in graph.edges().iter().filter(|e| e.from == node) {
        if edge.guard.is_default() {
            fallback.get_or_insert(edge);
        } else if edge.guard.matches(claim_size) {
            if explicit.is_some() {
                return Err(AirError::AmbiguousEdge {
                    node: node.to_string(),
                    claim_size,
                });
            }
            explicit = Some(edge);
        }
    }
    explicit
        .or(fallback)
        .map(|e| e.to.as_str())
        .ok_or_else(|| AirError::NoMatchingEdge {
            node: node.to_string(),
            claim_size,
        })
}
