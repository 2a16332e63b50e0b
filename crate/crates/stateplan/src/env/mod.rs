//! Environment boundary: the adapter contract, plan execution with state
//! probes, and the reward transform.
//!
//! Adapters expose a text-game-shaped surface (reset/step/describe plus the
//! object and template lists used for capacity estimates). The executor runs a
//! plan action by action, derives a latent state after each valid step by
//! probing with "look around" + inventory, and records paired x_AO / x_AS
//! traces. Probe steps are not counted as plan interactions.

pub mod bridge;
mod toy;

pub use toy::{ToyWorld, CANONICAL_PLAN};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{encode_state, StateId};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("environment protocol: {0}")]
    Protocol(String),
    #[error("environment connection closed")]
    Closed,
}

/// Result of stepping one action in the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub observation: String,
    pub raw_reward: f64,
    pub done: bool,
    /// False when the environment rejected or could not parse the action.
    pub valid: bool,
}

/// Static task description provided by the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInfo {
    /// Task objective text (what the agent should accomplish).
    pub objective: String,
    /// Prior description of the environment: fixed rules and constraints.
    pub description: String,
}

/// Adapter contract for a deterministic text environment.
///
/// Identical action sequences from `reset` must yield identical observation
/// and reward streams. Adapters must tolerate "look around" and `inventory`
/// probes at any point, including after `done`.
pub trait EnvAdapter {
    /// Reset to the initial state; returns the initial observation.
    fn reset(&mut self) -> Result<String, EnvError>;
    fn step(&mut self, action: &str) -> Result<StepOutcome, EnvError>;
    fn describe(&mut self) -> Result<TaskInfo, EnvError>;
    /// Objects currently reachable from the agent's position.
    fn accessible_objects(&mut self) -> Result<Vec<String>, EnvError>;
    /// Action templates with OBJ placeholders, e.g. "pick up OBJ".
    fn action_templates(&mut self) -> Result<Vec<String>, EnvError>;
    /// Current inventory rendered as text.
    fn inventory(&mut self) -> Result<String, EnvError>;
}

/// A latent state as observed from the environment: id plus the texts the id
/// was derived from and the capacity estimate for K_s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub id: StateId,
    /// Raw (unnormalized) observation + inventory text, kept readable for
    /// prompts and reports.
    pub description: String,
    /// templates × accessible objects; None when the estimate is unavailable.
    pub action_capacity: Option<u64>,
}

/// One entry of the action-observation trace (x_AO).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsRecord {
    pub action: String,
    pub observation: String,
}

/// One entry of the action-state trace (x_AS): everything the graph needs to
/// fold in a transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Latent state the action was taken from.
    pub source: StateId,
    pub action: String,
    pub observation: String,
    pub raw_reward: f64,
    /// signed_log1p(raw_reward); the value stored on graph edges.
    pub transformed_reward: f64,
    pub valid: bool,
    /// Post-action latent state; INVALID when valid = false.
    pub state_id: StateId,
    pub state_description: String,
    pub action_capacity: Option<u64>,
}

/// Everything recorded while executing one plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub x_ao: Vec<ObsRecord>,
    pub x_as: Vec<StepRecord>,
    pub done: bool,
    /// Where the walk ended: the last valid step's state, or the start state
    /// if no valid step executed.
    pub final_state: StateSnapshot,
}

/// Adapter failure mid-plan; carries whatever was recorded before it.
#[derive(Debug, Error)]
#[error("plan execution failed after {} recorded steps: {source}", .x_as.len())]
pub struct ExecutionError {
    #[source]
    pub source: EnvError,
    pub x_ao: Vec<ObsRecord>,
    pub x_as: Vec<StepRecord>,
}

/// Sign-preserving log transform: sign(r) · ln(1 + |r|). Defined at 0 and for
/// negative rewards, unlike a plain ln.
pub fn signed_log1p(r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else if r > 0.0 {
        r.ln_1p()
    } else {
        -(-r).ln_1p()
    }
}

/// Probe the environment ("look around" + inventory) and build the canonical
/// state snapshot. Probe steps are not plan interactions.
pub fn observe_state(env: &mut dyn EnvAdapter) -> Result<StateSnapshot, EnvError> {
    let look = env.step("look around")?;
    let inventory = env.inventory()?;
    let templates = env.action_templates()?;
    let objects = env.accessible_objects()?;
    let estimate = templates.len() as u64 * objects.len() as u64;
    Ok(StateSnapshot {
        id: encode_state(&look.observation, &inventory),
        description: format!("{}\n{}", look.observation.trim_end(), inventory.trim_end()),
        action_capacity: if estimate == 0 { None } else { Some(estimate) },
    })
}

/// Execute `plan` in order from `start`, recording x_AO and x_AS.
///
/// Invalid actions are recorded (sinking at INVALID) but do not advance the
/// source state. Execution stops early when the environment reports done.
pub fn execute_plan(
    env: &mut dyn EnvAdapter,
    plan: &[String],
    start: &StateSnapshot,
) -> Result<ExecutionTrace, ExecutionError> {
    let mut x_ao = Vec::new();
    let mut x_as = Vec::new();
    let mut current = start.clone();
    let mut done = false;

    let fail = |source, x_ao: &Vec<ObsRecord>, x_as: &Vec<StepRecord>| ExecutionError {
        source,
        x_ao: x_ao.clone(),
        x_as: x_as.clone(),
    };

    for action in plan {
        let out = match env.step(action) {
            Ok(out) => out,
            Err(e) => return Err(fail(e, &x_ao, &x_as)),
        };
        x_ao.push(ObsRecord {
            action: action.clone(),
            observation: out.observation.clone(),
        });
        if out.valid {
            let snap = match observe_state(env) {
                Ok(snap) => snap,
                Err(e) => return Err(fail(e, &x_ao, &x_as)),
            };
            x_as.push(StepRecord {
                source: current.id,
                action: action.clone(),
                observation: out.observation,
                raw_reward: out.raw_reward,
                transformed_reward: signed_log1p(out.raw_reward),
                valid: true,
                state_id: snap.id,
                state_description: snap.description.clone(),
                action_capacity: snap.action_capacity,
            });
            current = snap;
        } else {
            x_as.push(StepRecord {
                source: current.id,
                action: action.clone(),
                observation: out.observation,
                raw_reward: out.raw_reward,
                transformed_reward: signed_log1p(out.raw_reward),
                valid: false,
                state_id: StateId::INVALID,
                state_description: String::new(),
                action_capacity: None,
            });
        }
        if out.done {
            done = true;
            break;
        }
    }

    Ok(ExecutionTrace {
        x_ao,
        x_as,
        done,
        final_state: current,
    })
}
