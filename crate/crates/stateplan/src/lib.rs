//! Hybrid planner for deterministic, partially observable text environments.
//!
//! A state-space graph built from experience supplies known-good action
//! prefixes (TD(0) values with UCB-style exploration bonuses); an LLM oracle
//! extends plans past the graph's frontier and distills episode traces into
//! textual learnings. The two halves meet in [`agent::SolveSession`].

pub mod agent;
pub mod env;
pub mod graph;
pub mod oracle;
pub mod select;

pub use agent::{
    get_feedback, AgentError, EpisodeConfig, EpisodeReport, RoundReport, RunReport, SolveSession,
    TraceLine,
};

pub use env::{
    execute_plan, observe_state, signed_log1p, EnvAdapter, EnvError, ExecutionError,
    ExecutionTrace, ObsRecord, StateSnapshot, StepOutcome, StepRecord, TaskInfo, ToyWorld,
};
pub use graph::{
    encode_state, GraphEdge, GraphError, KFactorSide, StateGraph, StateId, StateNode, SweepReport,
    ValueConfig,
};
pub use oracle::{
    FnOracle, HttpConfig, HttpOracle, Learnings, Oracle, OracleClient, OracleError, PromptContext,
    ScriptedOracle, EXPLORATION_OBJECTIVE,
};
pub use select::{select_plan, SelectedPlan, StopReason};
