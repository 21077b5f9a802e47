use serde::{Deserialize, Serialize};

use super::{AirEdge, AirError, AirGraph, AirNode, Guard, NodeKind, ResourceDemand};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    id: String,
    entry: String,
    nodes: Vec<RawNode>,
    edges: Vec<RawEdge>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    demand: Option<ResourceDemand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trace: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    from: String,
    to: String,
    guard: Guard,
}

/// Parses an AIR JSON document. Only syntax and per-node shape are checked;
/// graph-level invariants are left to [`super::validate_air`].
pub fn parse_air(text: &str) -> Result<AirGraph, AirError> {
    let raw: RawGraph = serde_json::from_str(text).map_err(|e| AirError::SyntaxError {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut nodes = Vec::with_capacity(raw.nodes.len());
    for n in raw.nodes {
        let invalid = |reason: &str| AirError::InvalidNode {
            node: n.id.clone(),
            reason: reason.to_string(),
        };
        let kind = match n.kind.as_str() {
            "get_resource" => {
                if n.trace.is_some() {
                    return Err(invalid("`trace` is only allowed on fen nodes"));
                }
                let demand = n
                    .demand
                    .clone()
                    .ok_or_else(|| invalid("get_resource requires `demand`"))?;
                NodeKind::GetResource(demand)
            }
            "release_resource" => {
                if n.trace.is_some() || n.demand.is_some() {
                    return Err(invalid("release_resource takes no payload"));
                }
                NodeKind::ReleaseResource
            }
            "fen" => {
                if n.demand.is_some() {
                    return Err(invalid("`demand` is only allowed on get_resource nodes"));
                }
                let trace_ref = n
                    .trace
                    .clone()
                    .ok_or_else(|| invalid("fen requires `trace`"))?;
                NodeKind::Fen { trace_ref }
            }
            other => {
                return Err(AirError::UnknownNodeKind {
                    node: n.id,
                    kind: other.to_string(),
                })
            }
        };
        nodes.push(AirNode { id: n.id, kind });
    }

    let edges = raw
        .edges
        .into_iter()
        .map(|e| AirEdge {
            from: e.from,
            to: e.to,
            guard: e.guard,
        })
        .collect();

    Ok(AirGraph::new(raw.id, raw.entry, nodes, edges))
}

/// Serializes a graph back into the AIR JSON format.
pub fn print_air(graph: &AirGraph) -> String {
    let raw = RawGraph {
        id: graph.id().to_string(),
        entry: graph.entry().to_string(),
        nodes: graph
            .nodes()
            .iter()
            .map(|n| {
                let (demand, trace) = match &n.kind {
                    NodeKind::GetResource(d) => (Some(d.clone()), None),
                    NodeKind::ReleaseResource => (None, None),
                    NodeKind::Fen { trace_ref } => (None, Some(trace_ref.clone())),
                };
                RawNode {
                    id: n.id.clone(),
                    kind: n.kind.label().to_string(),
                    demand,
                    trace,
                }
            })
            .collect(),
        edges: graph
            .edges()
            .iter()
            .map(|e| RawEdge {
                from: e.from.clone(),
                to: e.to.clone(),
                guard: e.guard,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("AIR serialization is infallible")
}
