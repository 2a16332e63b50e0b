//! State-space graph: latent states keyed by content digest, action edges with
//! rewards, TD(0) value sweeps and UCB-style augmented values.
//!
//! The graph owns two reserved nodes. `StateId::ROOT` anchors every episode's
//! start state and its visit count doubles as the episode counter. All invalid
//! actions sink at `StateId::INVALID`, which never sources an edge and is
//! excluded from value sweeps.

mod format;

pub use format::{deserialize, serialize, FormatError, FORMAT_VERSION};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::env::StepRecord;

/// Action text used for the reserved edge linking ROOT to an episode's start state.
pub const EPISODE_START_ACTION: &str = "start";

/// Identifier of a latent state: SHA-256 digest of the canonical state text.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId([u8; 32]);

impl StateId {
    /// Reserved root node id (all zero bytes). Never produced by [`encode_state`].
    pub const ROOT: StateId = StateId([0u8; 32]);
    /// Reserved invalid sink id (all 0xFF bytes). Never produced by [`encode_state`].
    pub const INVALID: StateId = StateId([0xFFu8; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<StateId> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(StateId(arr))
    }

    /// Short prefix for log lines and summaries.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..6])
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == StateId::ROOT {
            write!(f, "StateId(ROOT)")
        } else if *self == StateId::INVALID {
            write!(f, "StateId(INVALID)")
        } else {
            write!(f, "StateId({})", self.short())
        }
    }
}

impl Serialize for StateId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for StateId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        StateId::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 64 hex chars"))
    }
}

/// Normalize a text fragment: case-fold and collapse all whitespace runs.
fn normalize(text: &str) -> String {
    text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Canonical state text: normalized observation, then normalized inventory,
/// joined by a newline. The parts contain no newlines after normalization, so
/// the concatenation is unambiguous.
pub fn canonical_state_text(observation: &str, inventory: &str) -> String {
    format!("{}\n{}", normalize(observation), normalize(inventory))
}

/// Derive the latent-state id from the observation and inventory texts.
///
/// Deterministic: equal canonical texts give equal ids.
pub fn encode_state(observation: &str, inventory: &str) -> StateId {
    let canonical = canonical_state_text(observation, inventory);
    let digest = Sha256::digest(canonical.as_bytes());
    StateId(digest.into())
}

/// A latent state and its learned statistics.
///
/// Equality covers the persisted fields only; `augmented_value` and
/// `k_factor` are caches recomputed by refresh passes.
#[derive(Debug, Clone)]
pub struct StateNode {
    pub id: StateId,
    /// Canonical state text this node was derived from.
    pub description: String,
    /// V(s), updated by TD(0) sweeps.
    pub value: f64,
    /// n_s: number of times a step (or episode start) landed on this state.
    pub visits: u64,
    /// |a_s|: estimated total number of possible actions, when known.
    pub action_capacity: Option<u64>,
    /// Actions already attempted from this state, valid or not.
    pub actions_tried: BTreeSet<String>,
    /// Cached V⊕(s) from the last refresh.
    pub augmented_value: f64,
    /// Cached K_s from the last refresh.
    pub k_factor: f64,
}

impl PartialEq for StateNode {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.description == other.description
            && self.value == other.value
            && self.visits == other.visits
            && self.action_capacity == other.action_capacity
            && self.actions_tried == other.actions_tried
    }
}

/// An observed action transition. At most one edge exists per (source, action).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub action: String,
    /// Transformed reward last observed for this transition.
    pub reward: f64,
    pub source: StateId,
    pub sink: StateId,
    pub traversals: u64,
}

/// Which state's K factor scales the selected child's metric during plan
/// selection. `Parent` matches the prose reading; `Child` is the literal
/// subscript in the selection routine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KFactorSide {
    Parent,
    Child,
}

/// Tuning knobs for value learning and selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValueConfig {
    /// TD step size, in (0, 1].
    pub alpha: f64,
    /// Decay factor, in (0, 1).
    pub gamma: f64,
    /// Exploration constant, > 0.
    pub c: f64,
    /// Initial value of an unexplored state.
    pub v_default: f64,
    /// Value pinned on the invalid sink node.
    pub v_invalid: f64,
    /// Non-linearity of the untried-action fraction, > 1.
    pub n_exponent: f64,
    /// Sweep cap for one value update pass.
    pub max_sweeps: u32,
    /// Stop sweeping once the mean absolute value change falls below this.
    pub convergence_eps: f64,
    /// See [`KFactorSide`].
    pub k_factor_side: KFactorSide,
}

impl Default for ValueConfig {
    fn default() -> Self {
        ValueConfig {
            alpha: 0.1,
            gamma: 0.95,
            c: std::f64::consts::SQRT_2,
            v_default: 0.1,
            v_invalid: -1.0,
            n_exponent: 2.0,
            max_sweeps: 200,
            convergence_eps: 1e-4,
            k_factor_side: KFactorSide::Parent,
        }
    }
}

impl ValueConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        let mut problems = Vec::new();
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            problems.push(format!("alpha must be in (0, 1], got {}", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            problems.push(format!("gamma must be in (0, 1), got {}", self.gamma));
        }
        if !(self.c > 0.0) {
            problems.push(format!("c must be positive, got {}", self.c));
        }
        if !(self.n_exponent > 1.0) {
            problems.push(format!("n_exponent must be > 1, got {}", self.n_exponent));
        }
        if self.max_sweeps == 0 {
            problems.push("max_sweeps must be positive".to_string());
        }
        if !(self.convergence_eps > 0.0) {
            problems.push(format!(
                "convergence_eps must be positive, got {}",
                self.convergence_eps
            ));
        }
        if !self.v_default.is_finite() || !self.v_invalid.is_finite() {
            problems.push("v_default and v_invalid must be finite".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(GraphError::Config(problems.join("; ")))
        }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid value configuration: {0}")]
    Config(String),
    #[error("unknown source state {0}: insert the episode start state first")]
    UnknownSource(StateId),
    #[error("unknown state {0}")]
    UnknownState(StateId),
    #[error("the invalid sink cannot source an edge")]
    InvalidSource,
}

/// Outcome of one [`StateGraph::value_sweep`] call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub sweeps_run: u32,
    pub final_mean_abs_delta: f64,
}

/// The state-space graph. Mutation requires exclusive access; read-only
/// queries (selection walks, summaries) can share a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGraph {
    nodes: BTreeMap<StateId, StateNode>,
    edges: BTreeMap<(StateId, String), GraphEdge>,
    /// Reverse adjacency: sink -> distinct source nodes.
    parents: BTreeMap<StateId, BTreeSet<StateId>>,
}

impl StateGraph {
    /// Fresh graph holding only the reserved ROOT and INVALID nodes.
    pub fn new(cfg: &ValueConfig) -> StateGraph {
        let mut nodes = BTreeMap::new();
        nodes.insert(
            StateId::ROOT,
            StateNode {
                id: StateId::ROOT,
                description: String::new(),
                value: cfg.v_default,
                visits: 0,
                action_capacity: None,
                actions_tried: BTreeSet::new(),
                augmented_value: cfg.v_default,
                k_factor: 1.0,
            },
        );
        nodes.insert(
            StateId::INVALID,
            StateNode {
                id: StateId::INVALID,
                description: String::new(),
                value: cfg.v_invalid,
                visits: 0,
                action_capacity: None,
                actions_tried: BTreeSet::new(),
                augmented_value: cfg.v_invalid,
                k_factor: 0.0,
            },
        );
        StateGraph {
            nodes,
            edges: BTreeMap::new(),
            parents: BTreeMap::new(),
        }
    }

    pub fn node(&self, id: StateId) -> Option<&StateNode> {
        self.nodes.get(&id)
    }

    pub fn node_mut(&mut self, id: StateId) -> Option<&mut StateNode> {
        self.nodes.get_mut(&id)
    }

    pub fn contains(&self, id: StateId) -> bool {
        self.nodes.contains_key(&id)
    }

    /// All nodes in id order, reserved ones included.
    pub fn nodes(&self) -> impl Iterator<Item = &StateNode> {
        self.nodes.values()
    }

    /// All edges in (source, action) order.
    pub fn edges(&self) -> impl Iterator<Item = &GraphEdge> {
        self.edges.values()
    }

    /// Nodes excluding ROOT and INVALID.
    pub fn data_node_count(&self) -> usize {
        self.nodes.len() - 2
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn invalid_edge_count(&self) -> usize {
        self.edges.values().filter(|e| e.sink == StateId::INVALID).count()
    }

    /// Outgoing edges of `source`, ordered by action text.
    pub fn edges_from(&self, source: StateId) -> impl Iterator<Item = &GraphEdge> {
        self.edges
            .range((source, String::new())..)
            .take_while(move |((s, _), _)| *s == source)
            .map(|(_, e)| e)
    }

    pub fn edge(&self, source: StateId, action: &str) -> Option<&GraphEdge> {
        self.edges.get(&(source, action.to_string()))
    }

    /// Distinct parent nodes of `id`.
    pub fn parents_of(&self, id: StateId) -> impl Iterator<Item = StateId> + '_ {
        self.parents.get(&id).into_iter().flatten().copied()
    }

    /// N in the augmented-value formula: sum of visit counts over the distinct
    /// parent nodes of `id`. Visit counts are integers, so the sum is exact
    /// and order independent.
    pub fn parent_visit_sum(&self, id: StateId) -> u64 {
        self.parents_of(id)
            .map(|p| self.nodes.get(&p).map_or(0, |n| n.visits))
            .sum()
    }

    /// Mark the start of an episode: bump the ROOT visit count (episode
    /// counter) and connect the start state to ROOT.
    pub fn begin_episode(
        &mut self,
        start: &crate::env::StateSnapshot,
        cfg: &ValueConfig,
    ) -> Result<StateId, GraphError> {
        self.nodes
            .get_mut(&StateId::ROOT)
            .expect("ROOT always present")
            .visits += 1;
        let record = StepRecord {
            source: StateId::ROOT,
            action: EPISODE_START_ACTION.to_string(),
            observation: String::new(),
            raw_reward: 0.0,
            transformed_reward: 0.0,
            valid: true,
            state_id: start.id,
            state_description: start.description.clone(),
            action_capacity: start.action_capacity,
        };
        self.upsert_transition(&record, cfg)?;
        Ok(start.id)
    }

    /// Fold one recorded step into the graph: create missing nodes and edges,
    /// bump counters, and route invalid steps to the INVALID sink.
    pub fn upsert_transition(
        &mut self,
        record: &StepRecord,
        cfg: &ValueConfig,
    ) -> Result<(), GraphError> {
        if record.source == StateId::INVALID {
            return Err(GraphError::InvalidSource);
        }
        if !self.nodes.contains_key(&record.source) {
            return Err(GraphError::UnknownSource(record.source));
        }

        let sink = if record.valid { record.state_id } else { StateId::INVALID };

        if record.valid {
            match self.nodes.get_mut(&sink) {
                Some(node) => {
                    node.visits += 1;
                    if record.action_capacity.is_some() {
                        node.action_capacity = record.action_capacity;
                    }
                }
                None => {
                    self.nodes.insert(
                        sink,
                        StateNode {
                            id: sink,
                            description: record.state_description.clone(),
                            value: cfg.v_default,
                            visits: 1,
                            action_capacity: record.action_capacity,
                            actions_tried: BTreeSet::new(),
                            augmented_value: cfg.v_default,
                            k_factor: k_factor(record.action_capacity, 0, cfg.n_exponent),
                        },
                    );
                }
            }
        }

        let key = (record.source, record.action.clone());
        match self.edges.get_mut(&key) {
            Some(edge) => {
                edge.traversals += 1;
                if edge.reward != record.transformed_reward {
                    log::warn!(
                        "environment determinism: edge ({}, {:?}) reward changed {} -> {}",
                        record.source.short(),
                        record.action,
                        edge.reward,
                        record.transformed_reward
                    );
                    edge.reward = record.transformed_reward;
                }
                if edge.sink != sink {
                    log::warn!(
                        "environment determinism: edge ({}, {:?}) sink changed {} -> {}",
                        record.source.short(),
                        record.action,
                        edge.sink.short(),
                        sink.short()
                    );
                    let old_sink = edge.sink;
                    edge.sink = sink;
                    self.unindex_parent(old_sink, record.source);
                }
            }
            None => {
                self.edges.insert(
                    key,
                    GraphEdge {
                        action: record.action.clone(),
                        reward: record.transformed_reward,
                        source: record.source,
                        sink,
                        traversals: 1,
                    },
                );
            }
        }
        self.parents.entry(sink).or_default().insert(record.source);

        self.nodes
            .get_mut(&record.source)
            .expect("source checked above")
            .actions_tried
            .insert(record.action.clone());
        Ok(())
    }

    /// Drop `source` from the parent index of `sink` unless another edge still
    /// links the pair.
    fn unindex_parent(&mut self, sink: StateId, source: StateId) {
        let still_linked = self
            .edges_from(source)
            .any(|e| e.sink == sink);
        if !still_linked {
            if let Some(set) = self.parents.get_mut(&sink) {
                set.remove(&source);
                if set.is_empty() {
                    self.parents.remove(&sink);
                }
            }
        }
    }

    /// Run TD(0) sweeps until the mean absolute value change drops below
    /// `cfg.convergence_eps` or `cfg.max_sweeps` is reached.
    ///
    /// Within a sweep, nodes are visited in id order and each node folds in
    /// its valid children in action order, updating its value in place after
    /// every child term. Edges sinking at INVALID are skipped. The result is
    /// bit-deterministic for a given graph and config.
    pub fn value_sweep(&mut self, cfg: &ValueConfig) -> SweepReport {
        let ids: Vec<StateId> = self
            .nodes
            .keys()
            .filter(|id| **id != StateId::INVALID)
            .copied()
            .collect();
        let mut mean_delta = 0.0;
        for sweep in 1..=cfg.max_sweeps {
            let before: Vec<f64> = ids.iter().map(|id| self.nodes[id].value).collect();
            for &parent in &ids {
                let children: Vec<(StateId, f64)> = self
                    .edges_from(parent)
                    .filter(|e| e.sink != StateId::INVALID)
                    .map(|e| (e.sink, e.reward))
                    .collect();
                for (sink, reward) in children {
                    let child_value = self.nodes[&sink].value;
                    let node = self.nodes.get_mut(&parent).expect("node present");
                    node.value += cfg.alpha * (reward + cfg.gamma * child_value - node.value);
                }
            }
            let total_delta: f64 = ids
                .iter()
                .zip(&before)
                .map(|(id, old)| (self.nodes[id].value - old).abs())
                .sum();
            mean_delta = total_delta / ids.len() as f64;
            if mean_delta < cfg.convergence_eps {
                return SweepReport { sweeps_run: sweep, final_mean_abs_delta: mean_delta };
            }
        }
        SweepReport { sweeps_run: cfg.max_sweeps, final_mean_abs_delta: mean_delta }
    }

    /// Exploration bonus C·sqrt(ln N / n_s) for `id`, computed live.
    ///
    /// ln is floored at 0 so states with N <= 1 get no bonus, and nodes that
    /// were never landed on (ROOT before any episode) get none either.
    pub fn exploration_bonus(&self, id: StateId, cfg: &ValueConfig) -> f64 {
        let node = match self.nodes.get(&id) {
            Some(n) => n,
            None => return 0.0,
        };
        if node.visits == 0 {
            return 0.0;
        }
        let n = self.parent_visit_sum(id);
        cfg.c * (ln_floored(n) / node.visits as f64).sqrt()
    }

    /// V⊕(s) = V(s) + exploration bonus, computed live from current counts.
    pub fn augmented_value_of(&self, id: StateId, cfg: &ValueConfig) -> f64 {
        match self.nodes.get(&id) {
            Some(node) => node.value + self.exploration_bonus(id, cfg),
            None => cfg.v_default,
        }
    }

    /// K_s: untried-action fraction raised to `cfg.n_exponent`.
    ///
    /// Unknown capacity keeps K at 1 until the first estimate arrives; zero
    /// capacity means nothing can be tried, so K is 0.
    pub fn k_factor_of(&self, id: StateId, cfg: &ValueConfig) -> f64 {
        let node = match self.nodes.get(&id) {
            Some(n) => n,
            None => return 1.0,
        };
        if id == StateId::INVALID {
            return 0.0;
        }
        k_factor(node.action_capacity, node.actions_tried.len() as u64, cfg.n_exponent)
    }

    /// Recompute and store V⊕ and K for every node except INVALID.
    ///
    /// Each node's result depends only on pre-refresh state, so the parallel
    /// and sequential paths produce bit-identical values.
    pub fn refresh_augmented_values(&mut self, cfg: &ValueConfig) {
        let ids: Vec<StateId> = self
            .nodes
            .keys()
            .filter(|id| **id != StateId::INVALID)
            .copied()
            .collect();
        let computed = self.compute_refresh(&ids, cfg);
        for (id, augmented, k) in computed {
            let node = self.nodes.get_mut(&id).expect("node present");
            node.augmented_value = augmented;
            node.k_factor = k;
        }
    }

    #[cfg(feature = "parallel")]
    fn compute_refresh(&self, ids: &[StateId], cfg: &ValueConfig) -> Vec<(StateId, f64, f64)> {
        use rayon::prelude::*;
        ids.par_iter().map(|&id| self.refresh_one(id, cfg)).collect()
    }

    #[cfg(not(feature = "parallel"))]
    fn compute_refresh(&self, ids: &[StateId], cfg: &ValueConfig) -> Vec<(StateId, f64, f64)> {
        self.refresh_sequential(ids, cfg)
    }

    /// Sequential refresh pass, kept callable in all builds so benchmarks can
    /// compare it against the parallel path.
    pub fn refresh_sequential(&self, ids: &[StateId], cfg: &ValueConfig) -> Vec<(StateId, f64, f64)> {
        ids.iter().map(|&id| self.refresh_one(id, cfg)).collect()
    }

    /// Parallel refresh pass over the given node ids.
    #[cfg(feature = "parallel")]
    pub fn refresh_parallel(&self, ids: &[StateId], cfg: &ValueConfig) -> Vec<(StateId, f64, f64)> {
        use rayon::prelude::*;
        ids.par_iter().map(|&id| self.refresh_one(id, cfg)).collect()
    }

    fn refresh_one(&self, id: StateId, cfg: &ValueConfig) -> (StateId, f64, f64) {
        (id, self.augmented_value_of(id, cfg), self.k_factor_of(id, cfg))
    }

    /// Ids of all non-reserved nodes plus ROOT, the refresh domain.
    pub fn refreshable_ids(&self) -> Vec<StateId> {
        self.nodes
            .keys()
            .filter(|id| **id != StateId::INVALID)
            .copied()
            .collect()
    }

    /// Every node except INVALID reachable from ROOT, every edge sourced at a
    /// non-INVALID node. Used by tests; cheap enough to call after bulk loads.
    pub fn check_structure(&self) -> Result<(), String> {
        for edge in self.edges.values() {
            if edge.source == StateId::INVALID {
                return Err(format!("edge {:?} sourced at INVALID", edge.action));
            }
            if !self.nodes.contains_key(&edge.source) || !self.nodes.contains_key(&edge.sink) {
                return Err(format!("edge {:?} has missing endpoint", edge.action));
            }
        }
        let mut seen = BTreeSet::from([StateId::ROOT]);
        let mut queue = vec![StateId::ROOT];
        while let Some(id) = queue.pop() {
            for edge in self.edges_from(id) {
                if seen.insert(edge.sink) {
                    queue.push(edge.sink);
                }
            }
        }
        for id in self.nodes.keys() {
            if *id != StateId::INVALID && !seen.contains(id) {
                return Err(format!("node {} unreachable from ROOT", id.short()));
            }
        }
        Ok(())
    }

    pub(crate) fn insert_node_raw(&mut self, node: StateNode) {
        self.nodes.insert(node.id, node);
    }

    pub(crate) fn insert_edge_raw(&mut self, edge: GraphEdge) {
        self.parents.entry(edge.sink).or_default().insert(edge.source);
        self.edges.insert((edge.source, edge.action.clone()), edge);
    }
}

/// ln floored at zero, with ln(0) treated as 0.
pub fn ln_floored(n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        (n as f64).ln().max(0.0)
    }
}

/// Untried-action fraction raised to `exponent`. Capacity `None` means
/// unknown (returns 1), `Some(0)` means no actions exist (returns 0).
pub fn k_factor(capacity: Option<u64>, tried: u64, exponent: f64) -> f64 {
    match capacity {
        None => 1.0,
        Some(0) => 0.0,
        Some(cap) => {
            let tried = tried.min(cap);
            ((cap - tried) as f64 / cap as f64).powf(exponent)
        }
    }
}
