//! Plan selection: walk the graph from the current state along maximum-V⊕
//! children until a leaf, an exploration trigger, or a loop stops the walk.
//!
//! The committed prefix of actions is handed to the executor as-is; the
//! terminal state and its avoided actions feed the oracle prompt.

use serde::{Deserialize, Serialize};

use crate::graph::{GraphError, KFactorSide, StateGraph, StateId, ValueConfig, ln_floored};

/// Why a selection walk stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The terminal state has no outgoing edges.
    Leaf,
    /// The default-exploration value beat the best child's scaled metric.
    ExploreTrigger,
    /// Committing the best child would revisit a state already on the walk.
    Loop,
    /// Every outgoing edge of the terminal state sinks at INVALID.
    AllChildrenInvalid,
}

/// Result of one selection walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPlan {
    /// Committed action prefix, replaying existing edges from the start state.
    pub actions: Vec<String>,
    pub terminal_state: StateId,
    pub terminal_description: String,
    /// Actions of every outgoing edge of the terminal state, valid or invalid,
    /// in lexicographic order. The oracle is told to avoid these.
    pub avoided_actions: Vec<String>,
    pub stop_reason: StopReason,
}

/// Walk the graph from `start`, committing the valid child with maximum V⊕ at
/// each step until one of the stop conditions fires.
///
/// Deterministic: V⊕ ties break toward the lexicographically smallest action
/// text, and all quantities are recomputed from current graph counts.
pub fn select_plan(
    graph: &StateGraph,
    start: StateId,
    cfg: &ValueConfig,
) -> Result<SelectedPlan, GraphError> {
    if !graph.contains(start) {
        return Err(GraphError::UnknownState(start));
    }

    let mut actions = Vec::new();
    let mut walk = vec![start];
    let mut current = start;
    let stop_reason;

    loop {
        debug_assert!(walk.len() <= graph.nodes().count());
        let outgoing: Vec<_> = graph.edges_from(current).collect();
        if outgoing.is_empty() {
            stop_reason = StopReason::Leaf;
            break;
        }
        let valid: Vec<_> = outgoing
            .iter()
            .filter(|e| e.sink != StateId::INVALID)
            .collect();
        if valid.is_empty() {
            stop_reason = StopReason::AllChildrenInvalid;
            break;
        }

        // argmax over V⊕ of the valid children; edges iterate in action order
        // so strict improvement keeps the smallest action on ties.
        let mut best = &valid[0];
        let mut best_value = graph.augmented_value_of(best.sink, cfg);
        for edge in &valid[1..] {
            let value = graph.augmented_value_of(edge.sink, cfg);
            if value > best_value {
                best = edge;
                best_value = value;
            }
        }

        let k_parent = graph.k_factor_of(current, cfg);
        let k_for_child = match cfg.k_factor_side {
            KFactorSide::Parent => k_parent,
            KFactorSide::Child => graph.k_factor_of(best.sink, cfg),
        };
        let child_metric =
            graph.node(best.sink).expect("edge sink present").value
                + k_for_child * graph.exploration_bonus(best.sink, cfg);
        let parent_visits = graph.node(current).expect("walk node present").visits;
        let explore_value = cfg.v_default + k_parent * cfg.c * ln_floored(parent_visits).sqrt();

        if explore_value > child_metric {
            stop_reason = StopReason::ExploreTrigger;
            break;
        }
        if walk.contains(&best.sink) {
            stop_reason = StopReason::Loop;
            break;
        }
        actions.push(best.action.clone());
        walk.push(best.sink);
        current = best.sink;
    }

    let avoided_actions: Vec<String> = graph
        .edges_from(current)
        .map(|e| e.action.clone())
        .collect();
    let terminal_description = graph
        .node(current)
        .map(|n| n.description.clone())
        .unwrap_or_default();

    Ok(SelectedPlan {
        actions,
        terminal_state: current,
        terminal_description,
        avoided_actions,
        stop_reason,
    })
}
