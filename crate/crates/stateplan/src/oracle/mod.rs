//! LLM oracle layer: prompt contexts, plan generation with format retries,
//! and the textual learnings memory carried between episodes.
//!
//! Everything behind [`OracleClient`] is a plain completion call, so tests
//! run against scripted responses and production runs point at an HTTP
//! chat-completion endpoint.

mod http;
mod mock;
pub mod prompts;

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::ObsRecord;

pub use http::{HttpConfig, HttpOracle};
pub use mock::{FnOracle, ScriptedOracle};
pub use prompts::{DEFAULT_PLAN_EXAMPLES, EXPLORATION_OBJECTIVE};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    /// The backend itself failed (network, exhausted script, HTTP error).
    /// Callers treat this as a hard failure.
    #[error("oracle transport failed: {0}")]
    Transport(String),
    /// Every attempt produced text that does not parse as an action list.
    #[error("oracle returned unparseable output after {attempts} attempts: {last:?}")]
    Format { attempts: u32, last: String },
}

/// A completion backend. `system` and `user` are the two prompt halves;
/// the return value is the raw model text.
pub trait OracleClient {
    fn complete(&mut self, system: &str, user: &str) -> Result<String, OracleError>;
}

/// Belief axioms accumulated by the learner. Lines are kept exactly as the
/// model produced them, minus entries that violate the format contract.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Learnings {
    axioms: Vec<String>,
}

impl Learnings {
    /// Builds a learnings set, dropping empty lines, lines containing `_`,
    /// and exact duplicates. Dropped lines are logged at warn level.
    pub fn new(lines: Vec<String>) -> Self {
        let mut axioms: Vec<String> = Vec::with_capacity(lines.len());
        for line in lines {
            let line = line.trim().to_string();
            if line.is_empty() {
                log::warn!("dropping empty belief axiom");
            } else if line.contains('_') {
                log::warn!("dropping belief axiom with underscore: {line:?}");
            } else if axioms.contains(&line) {
                log::warn!("dropping duplicate belief axiom: {line:?}");
            } else {
                axioms.push(line);
            }
        }
        Learnings { axioms }
    }

    pub fn axioms(&self) -> &[String] {
        &self.axioms
    }

    pub fn is_empty(&self) -> bool {
        self.axioms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.axioms.len()
    }

    /// One axiom per line, as embedded in prompts.
    pub fn render(&self) -> String {
        self.axioms.join("\n")
    }
}

/// Everything the action planner sees, assembled by the agent each round.
#[derive(Debug, Clone)]
pub struct PromptContext {
    /// Task objective, or [`EXPLORATION_OBJECTIVE`] on exploration runs.
    pub objective: String,
    /// Fixed rules of the environment, including the allowed action set.
    pub prior_axioms: String,
    pub learnings: Learnings,
    /// Readable description of the state the plan continues from.
    pub current_state_text: String,
    /// Immediate actions the planner must not repeat from this state.
    pub avoided_actions: Vec<String>,
    /// Rendered action/observation history for the episode so far.
    pub trace: String,
    /// Few-shot output examples.
    pub plan_examples: String,
}

/// Renders an action/observation sequence for prompt embedding.
pub fn render_trace(records: &[ObsRecord]) -> String {
    let mut out = String::new();
    for rec in records {
        if !out.is_empty() {
            out.push_str("\n\n");
        }
        out.push_str("action: ");
        out.push_str(&rec.action);
        out.push_str("\nobservation: ");
        out.push_str(&rec.observation);
    }
    out
}

/// Probability of substituting the exploration objective: min(0.5, sigma /
/// ln(max(n_exp, 2))).
pub fn exploration_probability(sigma: f64, n_exploration_runs: u64) -> f64 {
    let n = n_exploration_runs.max(2) as f64;
    (sigma / n.ln()).min(0.5)
}

/// Draws against [`exploration_probability`] and, on success, swaps the
/// context objective for the exploration directive. The run counter is
/// incremented only when the substitution is used.
pub fn maybe_substitute_objective<R: Rng>(
    ctx: &mut PromptContext,
    n_exploration_runs: &mut u64,
    sigma: f64,
    rng: &mut R,
) -> bool {
    let p = exploration_probability(sigma, *n_exploration_runs);
    if rng.gen::<f64>() < p {
        ctx.objective = EXPLORATION_OBJECTIVE.to_string();
        *n_exploration_runs += 1;
        true
    } else {
        false
    }
}

/// Parses a model response as one top-level JSON list of double-quoted
/// strings. Tolerates surrounding whitespace and a Markdown code fence,
/// nothing else.
pub fn parse_string_list(response: &str) -> Result<Vec<String>, String> {
    let mut text = response.trim();
    if let Some(rest) = text.strip_prefix("```") {
        let rest = rest.strip_prefix("json").unwrap_or(rest);
        let rest = rest.trim_start_matches(['\r', '\n']);
        match rest.rfind("```") {
            Some(end) => text = rest[..end].trim(),
            None => return Err("unterminated code fence".to_string()),
        }
    }
    serde_json::from_str::<Vec<String>>(text).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct CallRecord<'a> {
    purpose: &'static str,
    attempt: u32,
    system: &'a str,
    user: &'a str,
    response: Option<&'a str>,
    error: Option<String>,
}

/// Wraps a completion backend with format-retry logic and optional call
/// logging. `max_retries` counts re-sends after the first attempt.
pub struct Oracle {
    client: Box<dyn OracleClient>,
    max_retries: u32,
    call_log: Option<Box<dyn Write>>,
}

impl Oracle {
    pub fn new(client: Box<dyn OracleClient>) -> Self {
        Oracle { client, max_retries: 2, call_log: None }
    }

    pub fn with_max_retries(mut self, max_retries: u32) -> Self {
        self.max_retries = max_retries;
        self
    }

    /// Appends one structured record per completion call (request and
    /// response, or the transport error) to `sink`, one JSON object per line.
    pub fn with_call_log(mut self, sink: Box<dyn Write>) -> Self {
        self.call_log = Some(sink);
        self
    }

    fn log_call(&mut self, record: &CallRecord) {
        if let Some(sink) = self.call_log.as_mut() {
            let line = serde_json::to_string(record).expect("call record serializes");
            if let Err(e) = writeln!(sink, "{line}") {
                log::warn!("oracle call log write failed: {e}");
            }
        }
    }

    fn complete_logged(
        &mut self,
        purpose: &'static str,
        attempt: u32,
        system: &str,
        user: &str,
    ) -> Result<String, OracleError> {
        let result = self.client.complete(system, user);
        self.log_call(&CallRecord {
            purpose,
            attempt,
            system,
            user,
            response: result.as_deref().ok(),
            error: result.as_ref().err().map(|e| e.to_string()),
        });
        result
    }

    /// Requests and parses an action plan. On a parse failure the prompt is
    /// re-sent with a format reminder appended, up to `max_retries` times;
    /// transport errors abort immediately.
    pub fn generate_action_plan(
        &mut self,
        ctx: &PromptContext,
    ) -> Result<Vec<String>, OracleError> {
        let (system, user) = prompts::render_action_plan_prompt(ctx);
        let mut prompt = user;
        let mut last = String::new();
        for attempt in 1..=self.max_retries + 1 {
            let response = self.complete_logged("action_plan", attempt, &system, &prompt)?;
            match parse_string_list(&response) {
                Ok(actions) => return Ok(actions),
                Err(why) => {
                    log::warn!("action plan attempt {attempt} did not parse: {why}");
                    last = response;
                    prompt.push_str("\n\n");
                    prompt.push_str(prompts::FORMAT_REMINDER);
                }
            }
        }
        Err(OracleError::Format { attempts: self.max_retries + 1, last })
    }

    /// Runs the learner over an episode trace. An empty trace returns the
    /// prior unchanged without calling the backend; a format failure after
    /// retries keeps the prior and logs a warning. Transport errors
    /// propagate.
    pub fn update_learnings(
        &mut self,
        objective: &str,
        prior: &Learnings,
        trace: &str,
        feedback: &str,
    ) -> Result<Learnings, OracleError> {
        if trace.trim().is_empty() {
            return Ok(prior.clone());
        }
        let (system, user) = prompts::render_learner_prompt(objective, prior, trace, feedback);
        let mut prompt = user;
        for attempt in 1..=self.max_retries + 1 {
            let response = self.complete_logged("learner", attempt, &system, &prompt)?;
            match parse_string_list(&response) {
                Ok(lines) => return Ok(Learnings::new(lines)),
                Err(why) => {
                    log::warn!("learner attempt {attempt} did not parse: {why}");
                    prompt.push_str("\n\n");
                    prompt.push_str(prompts::FORMAT_REMINDER);
                }
            }
        }
        log::warn!("learner output never parsed; keeping prior belief axioms");
        Ok(prior.clone())
    }
}

#[cfg(test)]
mod tests;
