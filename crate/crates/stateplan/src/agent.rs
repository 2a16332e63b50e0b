//! The solve loop: episodes of select → generate → execute → update, with
//! feedback annotation and learner updates at episode boundaries.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{execute_plan, observe_state, EnvAdapter, StepRecord, TaskInfo};
use crate::graph::{StateGraph, StateId, ValueConfig};
use crate::oracle::{
    maybe_substitute_objective, render_trace, Learnings, Oracle, OracleError, PromptContext,
    DEFAULT_PLAN_EXAMPLES,
};
use crate::select::{select_plan, StopReason};

pub const FEEDBACK_NO_PROGRESS: &str =
    "The agent performed very poorly and made no progress in solving the task.";
pub const FEEDBACK_SOME_PROGRESS: &str =
    "The agent performed poorly and made some progress but not enough to solve the task.";
pub const FEEDBACK_GOOD_PROGRESS: &str =
    "The agent performed moderately and made good progress but could not completely solve the task.";
pub const FEEDBACK_SOLVED: &str =
    "The agent performed very well and completely solved the task.";

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("invalid episode config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    /// Rounds of select/generate/execute per episode (j).
    pub rounds_per_episode: u32,
    pub max_episodes: u32,
    /// Exploration-objective rate constant (σ), 0 < σ < 0.5.
    pub sigma: f64,
    /// Cumulative raw reward treated as task completion.
    pub goal_reward: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            rounds_per_episode: 5,
            max_episodes: 20,
            sigma: 0.3,
            goal_reward: 1.0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.rounds_per_episode == 0 {
            return Err(AgentError::Config("rounds_per_episode must be positive".to_string()));
        }
        if self.max_episodes == 0 {
            return Err(AgentError::Config("max_episodes must be positive".to_string()));
        }
        if !(self.sigma > 0.0 && self.sigma < 0.5) {
            return Err(AgentError::Config(format!(
                "sigma must lie strictly between 0 and 0.5, got {}",
                self.sigma
            )));
        }
        if !(self.goal_reward > 0.0) || !self.goal_reward.is_finite() {
            return Err(AgentError::Config(format!(
                "goal_reward must be a positive finite number, got {}",
                self.goal_reward
            )));
        }
        Ok(())
    }
}

/// Maps an episode's raw reward total to one of four feedback sentences:
/// no progress, below half of goal, at least half, goal reached.
pub fn get_feedback(total_raw_reward: f64, goal_reward: f64) -> &'static str {
    if total_raw_reward >= goal_reward {
        FEEDBACK_SOLVED
    } else if total_raw_reward >= 0.5 * goal_reward {
        FEEDBACK_GOOD_PROGRESS
    } else if total_raw_reward > 0.0 {
        FEEDBACK_SOME_PROGRESS
    } else {
        FEEDBACK_NO_PROGRESS
    }
}

/// One round of the solve loop, with the executed steps it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub index: u32,
    /// Committed prefix τ from graph selection.
    pub committed_actions: Vec<String>,
    /// Oracle suffix τ′ (empty when the oracle output never parsed).
    pub oracle_actions: Vec<String>,
    /// State the selection walk stopped at; the oracle plans onward from it.
    pub terminal_state: StateId,
    pub avoided_actions: Vec<String>,
    pub stop_reason: StopReason,
    pub used_exploration_objective: bool,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub index: u32,
    pub rounds: Vec<RoundReport>,
    pub cumulative_raw_reward: f64,
    pub cumulative_transformed_reward: f64,
    pub feedback: String,
    /// Plan actions executed this episode (probes excluded).
    pub interactions: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
    pub episodes: Vec<EpisodeReport>,
    pub total_interactions: u64,
    pub solved: bool,
    /// Set when the run aborted before exhausting episodes or solving.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One line of the append-only per-round trace log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub episode: u32,
    pub round: u32,
    pub record: StepRecord,
}

enum EpisodeEnd {
    Continue,
    Solved,
    Fatal(String),
}

type Checkpoint<'a> = dyn FnMut(&StateGraph, &Learnings) -> std::io::Result<()> + 'a;

/// Drives one environment, one oracle and one graph through the solve loop.
/// The session borrows its collaborators so the caller keeps ownership for
/// persistence afterwards.
pub struct SolveSession<'a> {
    env: &'a mut dyn EnvAdapter,
    graph: &'a mut StateGraph,
    oracle: &'a mut Oracle,
    learnings: &'a mut Learnings,
    value_cfg: ValueConfig,
    episode_cfg: EpisodeConfig,
    rng: ChaCha8Rng,
    n_exploration_runs: u64,
    trace_log: Option<Box<dyn Write + 'a>>,
    checkpoint: Option<Box<Checkpoint<'a>>>,
}

impl<'a> SolveSession<'a> {
    pub fn new(
        env: &'a mut dyn EnvAdapter,
        graph: &'a mut StateGraph,
        oracle: &'a mut Oracle,
        learnings: &'a mut Learnings,
        value_cfg: ValueConfig,
        episode_cfg: EpisodeConfig,
        seed: u64,
    ) -> Result<Self, AgentError> {
        episode_cfg.validate()?;
        Ok(SolveSession {
            env,
            graph,
            oracle,
            learnings,
            value_cfg,
            episode_cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            n_exploration_runs: 0,
            trace_log: None,
            checkpoint: None,
        })
    }

    /// Appends one [`TraceLine`] per executed step to `sink`.
    pub fn with_trace_log(mut self, sink: Box<dyn Write + 'a>) -> Self {
        self.trace_log = Some(sink);
        self
    }

    /// Called after every episode (including failed ones) so callers can
    /// persist the graph and learnings incrementally.
    pub fn with_checkpoint(
        mut self,
        checkpoint: Box<dyn FnMut(&StateGraph, &Learnings) -> std::io::Result<()> + 'a>,
    ) -> Self {
        self.checkpoint = Some(checkpoint);
        self
    }

    /// Runs episodes until the goal is reached or `max_episodes` is spent.
    /// Failures inside an episode are recorded on that episode's report;
    /// failures that make further progress impossible set `report.error`.
    pub fn run(&mut self) -> RunReport {
        let mut report = RunReport::default();
        let task = match self.env.describe() {
            Ok(task) => task,
            Err(e) => {
                report.error = Some(format!("environment describe failed: {e}"));
                return report;
            }
        };
        let templates = match self.env.action_templates() {
            Ok(t) => t,
            Err(e) => {
                report.error = Some(format!("environment action templates failed: {e}"));
                return report;
            }
        };
        let prior_axioms = compose_prior_axioms(&task.description, &templates);

        for index in 1..=self.episode_cfg.max_episodes {
            let (episode, end) = self.run_episode(index, &task, &prior_axioms);
            report.total_interactions += episode.interactions;
            report.episodes.push(episode);
            match end {
                EpisodeEnd::Continue => {}
                EpisodeEnd::Solved => {
                    report.solved = true;
                    break;
                }
                EpisodeEnd::Fatal(message) => {
                    report.error = Some(message);
                    break;
                }
            }
        }
        report
    }

    fn run_episode(
        &mut self,
        index: u32,
        task: &TaskInfo,
        prior_axioms: &str,
    ) -> (EpisodeReport, EpisodeEnd) {
        let mut episode = EpisodeReport {
            index,
            rounds: Vec::new(),
            cumulative_raw_reward: 0.0,
            cumulative_transformed_reward: 0.0,
            feedback: String::new(),
            interactions: 0,
            error: None,
        };

        // A reset that fails leaves no environment to continue with.
        if let Err(e) = self.env.reset() {
            episode.error = Some(format!("reset failed: {e}"));
            return (episode, EpisodeEnd::Fatal(format!("episode {index}: reset failed: {e}")));
        }
        let start = match observe_state(self.env) {
            Ok(s) => s,
            Err(e) => {
                episode.error = Some(format!("initial observation failed: {e}"));
                return (
                    episode,
                    EpisodeEnd::Fatal(format!("episode {index}: initial observation failed: {e}")),
                );
            }
        };
        if let Err(e) = self.graph.begin_episode(&start, &self.value_cfg) {
            episode.error = Some(format!("graph episode start failed: {e}"));
            return (
                episode,
                EpisodeEnd::Fatal(format!("episode {index}: graph episode start failed: {e}")),
            );
        }
        self.graph.refresh_augmented_values(&self.value_cfg);

        let mut x_ao = Vec::new();
        let mut records: Vec<StepRecord> = Vec::new();
        let mut current = start;
        let mut done = false;
        let mut fatal: Option<String> = None;

        for round in 1..=self.episode_cfg.rounds_per_episode {
            let selected = match select_plan(self.graph, current.id, &self.value_cfg) {
                Ok(s) => s,
                Err(e) => {
                    episode.error = Some(format!("round {round}: plan selection failed: {e}"));
                    break;
                }
            };

            let mut ctx = PromptContext {
                objective: task.objective.clone(),
                prior_axioms: prior_axioms.to_string(),
                learnings: self.learnings.clone(),
                current_state_text: selected.terminal_description.clone(),
                avoided_actions: selected.avoided_actions.clone(),
                trace: render_trace(&x_ao),
                plan_examples: DEFAULT_PLAN_EXAMPLES.to_string(),
            };
            let used_exploration = maybe_substitute_objective(
                &mut ctx,
                &mut self.n_exploration_runs,
                self.episode_cfg.sigma,
                &mut self.rng,
            );

            let oracle_actions = match self.oracle.generate_action_plan(&ctx) {
                Ok(actions) => actions,
                Err(err @ OracleError::Format { .. }) => {
                    log::warn!("round {round}: {err}; continuing with empty oracle suffix");
                    Vec::new()
                }
                Err(e) => {
                    episode.error = Some(format!("round {round}: oracle failed: {e}"));
                    break;
                }
            };

            let mut plan = selected.actions.clone();
            plan.extend(oracle_actions.iter().cloned());

            let (step_records, obs_records, reached_done, final_state, exec_error) =
                match execute_plan(self.env, &plan, &current) {
                    Ok(trace) => (trace.x_as, trace.x_ao, trace.done, Some(trace.final_state), None),
                    Err(e) => {
                        let message = format!("round {round}: {e}");
                        (e.x_as, e.x_ao, false, None, Some(message))
                    }
                };

            // Fold in whatever executed, even if the plan died partway.
            for record in &step_records {
                if let Err(e) = self.graph.upsert_transition(record, &self.value_cfg) {
                    fatal = Some(format!("episode {index}: graph update failed: {e}"));
                    break;
                }
            }
            if fatal.is_none() {
                self.graph.value_sweep(&self.value_cfg);
                self.graph.refresh_augmented_values(&self.value_cfg);
            }
            self.log_steps(index, round, &step_records);

            episode.rounds.push(RoundReport {
                index: round,
                committed_actions: selected.actions,
                oracle_actions,
                terminal_state: selected.terminal_state,
                avoided_actions: selected.avoided_actions,
                stop_reason: selected.stop_reason,
                used_exploration_objective: used_exploration,
                steps: step_records.clone(),
            });
            x_ao.extend(obs_records);
            records.extend(step_records);

            if fatal.is_some() {
                break;
            }
            if let Some(message) = exec_error {
                episode.error = Some(message);
                break;
            }
            current = final_state.expect("successful execution always yields a final state");

            let total_raw: f64 = records.iter().map(|r| r.raw_reward).sum();
            if reached_done || total_raw >= self.episode_cfg.goal_reward {
                done = true;
                break;
            }
        }

        episode.cumulative_raw_reward = records.iter().map(|r| r.raw_reward).sum();
        episode.cumulative_transformed_reward =
            records.iter().map(|r| r.transformed_reward).sum();
        episode.interactions = records.len() as u64;
        episode.feedback =
            get_feedback(episode.cumulative_raw_reward, self.episode_cfg.goal_reward).to_string();

        // The learner runs for every cleanly finished episode, the final one
        // included; it is skipped after hard failures since the oracle or
        // environment may be the broken part.
        if episode.error.is_none() && fatal.is_none() {
            match self.oracle.update_learnings(
                &task.objective,
                self.learnings,
                &render_trace(&x_ao),
                &episode.feedback,
            ) {
                Ok(updated) => *self.learnings = updated,
                Err(e) => episode.error = Some(format!("learner failed: {e}")),
            }
        }

        if let Some(cb) = self.checkpoint.as_mut() {
            if let Err(e) = cb(self.graph, self.learnings) {
                let message = format!("episode {index}: checkpoint failed: {e}");
                episode.error.get_or_insert_with(|| message.clone());
                return (episode, EpisodeEnd::Fatal(message));
            }
        }

        let end = match fatal {
            Some(message) => EpisodeEnd::Fatal(message),
            None if done => EpisodeEnd::Solved,
            None => EpisodeEnd::Continue,
        };
        (episode, end)
    }

    fn log_steps(&mut self, episode: u32, round: u32, records: &[StepRecord]) {
        let Some(sink) = self.trace_log.as_mut() else {
            return;
        };
        for record in records {
            let line = TraceLine { episode, round, record: record.clone() };
            let json = serde_json::to_string(&line).expect("trace line serializes");
            if let Err(e) = writeln!(sink, "{json}") {
                log::warn!("trace log write failed: {e}");
                return;
            }
        }
        if let Err(e) = sink.flush() {
            log::warn!("trace log flush failed: {e}");
        }
    }
}

/// Fixed rules text shown to the planner: the environment's own description
/// followed by its action templates.
pub fn compose_prior_axioms(description: &str, templates: &[String]) -> String {
    format!(
        "{}\n\nHere are the following set of allowed actions. where OBJ should be replaced by \
         any object that you can find in your current state.\n\nSet of parameter values:\n\n{}",
        description.trim_end(),
        templates.join("\n")
    )
}

#[cfg(test)]
mod tests;
