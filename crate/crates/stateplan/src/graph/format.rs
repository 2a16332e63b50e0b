//! Versioned on-disk representation of a [`StateGraph`].
//!
//! The file is pretty-printed JSON with a fixed field set; unknown fields are
//! rejected so stale tooling fails loudly instead of dropping data.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GraphEdge, StateGraph, StateId, StateNode, ValueConfig};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse { offset: usize, line: usize, column: usize, message: String },
    #[error("unsupported graph file version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("invalid graph file: {0}")]
    Invalid(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    version: u32,
    config_echo: ValueConfig,
    nodes: Vec<NodeRow>,
    edges: Vec<EdgeRow>,
    root: StateId,
    invalid: StateId,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRow {
    id: StateId,
    description: String,
    value: f64,
    visits: u64,
    action_capacity: Option<u64>,
    actions_tried: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRow {
    action: String,
    reward: f64,
    source: StateId,
    sink: StateId,
    traversals: u64,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

/// Serialize the graph with the config echoed for later inspection.
pub fn serialize(graph: &StateGraph, cfg: &ValueConfig) -> Vec<u8> {
    let file = GraphFile {
        version: FORMAT_VERSION,
        config_echo: cfg.clone(),
        nodes: graph
            .nodes()
            .map(|n| NodeRow {
                id: n.id,
                description: n.description.clone(),
                value: n.value,
                visits: n.visits,
                action_capacity: n.action_capacity,
                actions_tried: n.actions_tried.iter().cloned().collect(),
            })
            .collect(),
        edges: graph
            .edges()
            .map(|e| EdgeRow {
                action: e.action.clone(),
                reward: e.reward,
                source: e.source,
                sink: e.sink,
                traversals: e.traversals,
            })
            .collect(),
        root: StateId::ROOT,
        invalid: StateId::INVALID,
    };
    let mut bytes = serde_json::to_vec_pretty(&file).expect("graph file serializes");
    bytes.push(b'\n');
    bytes
}

/// Parse a graph file, returning the graph and the config it was written with.
///
/// Fails without partial results: a truncated or malformed stream yields a
/// [`FormatError::Parse`] carrying the byte offset of the failure.
pub fn deserialize(bytes: &[u8]) -> Result<(StateGraph, ValueConfig), FormatError> {
    let probe: VersionProbe =
        serde_json::from_slice(bytes).map_err(|e| parse_error(bytes, &e))?;
    if probe.version != FORMAT_VERSION {
        return Err(FormatError::Version { found: probe.version, expected: FORMAT_VERSION });
    }
    let file: GraphFile = serde_json::from_slice(bytes).map_err(|e| parse_error(bytes, &e))?;

    if file.root != StateId::ROOT {
        return Err(FormatError::Invalid("root marker does not match the reserved id".into()));
    }
    if file.invalid != StateId::INVALID {
        return Err(FormatError::Invalid("invalid marker does not match the reserved id".into()));
    }
    file.config_echo
        .validate()
        .map_err(|e| FormatError::Invalid(format!("config_echo rejected: {e}")))?;

    let mut graph = StateGraph::new(&file.config_echo);
    let mut seen = BTreeSet::new();
    for row in file.nodes {
        if !seen.insert(row.id) {
            return Err(FormatError::Invalid(format!("duplicate node id {}", row.id.short())));
        }
        graph.insert_node_raw(StateNode {
            id: row.id,
            description: row.description,
            value: row.value,
            visits: row.visits,
            action_capacity: row.action_capacity,
            actions_tried: row.actions_tried.into_iter().collect(),
            augmented_value: row.value,
            k_factor: super::k_factor(
                row.action_capacity,
                0,
                file.config_echo.n_exponent,
            ),
        });
    }
    if !seen.contains(&StateId::ROOT) || !seen.contains(&StateId::INVALID) {
        return Err(FormatError::Invalid("reserved nodes missing from node list".into()));
    }
    for row in file.edges {
        if row.source == StateId::INVALID {
            return Err(FormatError::Invalid(format!(
                "edge {:?} sourced at the invalid sink",
                row.action
            )));
        }
        if !seen.contains(&row.source) || !seen.contains(&row.sink) {
            return Err(FormatError::Invalid(format!(
                "edge {:?} references a missing node",
                row.action
            )));
        }
        graph.insert_edge_raw(GraphEdge {
            action: row.action,
            reward: row.reward,
            source: row.source,
            sink: row.sink,
            traversals: row.traversals,
        });
    }
    // Stored K factors depend on actions_tried, recompute now that edges exist.
    graph.refresh_augmented_values(&file.config_echo);
    Ok((graph, file.config_echo))
}

fn parse_error(bytes: &[u8], err: &serde_json::Error) -> FormatError {
    let line = err.line().max(1);
    let column = err.column().max(1);
    let mut offset = 0usize;
    for (i, raw_line) in bytes.split(|b| *b == b'\n').enumerate() {
        if i + 1 == line {
            offset += (column - 1).min(raw_line.len());
            break;
        }
        offset += raw_line.len() + 1;
    }
    FormatError::Parse { offset: offset.min(bytes.len()), line, column, message: err.to_string() }
}
