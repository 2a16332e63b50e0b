//! Offline oracle backends for tests and replayable runs.

use std::collections::VecDeque;
use std::path::Path;

use serde::Deserialize;

use super::{OracleClient, OracleError};

/// Replays a fixed list of responses in order. With `repeat_last` the final
/// response is repeated once the script runs out; otherwise further calls
/// are a transport error.
#[derive(Debug, Clone, Default)]
pub struct ScriptedOracle {
    responses: VecDeque<String>,
    last: Option<String>,
    repeat_last: bool,
    calls: Vec<(String, String)>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Bare(Vec<String>),
    Tagged {
        responses: Vec<String>,
        #[serde(default)]
        repeat_last: bool,
    },
}

impl ScriptedOracle {
    pub fn new<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        ScriptedOracle {
            responses: responses.into_iter().map(Into::into).collect(),
            ..ScriptedOracle::default()
        }
    }

    pub fn repeating_last(mut self) -> Self {
        self.repeat_last = true;
        self
    }

    /// Loads a script from JSON: either a bare array of responses or
    /// `{"responses": [...], "repeat_last": bool}`.
    pub fn from_file(path: &Path) -> Result<Self, OracleError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| OracleError::Transport(format!("read {}: {e}", path.display())))?;
        let parsed: ScriptFile = serde_json::from_str(&raw)
            .map_err(|e| OracleError::Transport(format!("parse {}: {e}", path.display())))?;
        Ok(match parsed {
            ScriptFile::Bare(responses) => ScriptedOracle::new(responses),
            ScriptFile::Tagged { responses, repeat_last } => {
                let mut script = ScriptedOracle::new(responses);
                script.repeat_last = repeat_last;
                script
            }
        })
    }

    /// Every (system, user) prompt pair seen so far.
    pub fn calls(&self) -> &[(String, String)] {
        &self.calls
    }
}

impl OracleClient for ScriptedOracle {
    fn complete(&mut self, system: &str, user: &str) -> Result<String, OracleError> {
        self.calls.push((system.to_string(), user.to_string()));
        if let Some(next) = self.responses.pop_front() {
            self.last = Some(next.clone());
            return Ok(next);
        }
        match (&self.last, self.repeat_last) {
            (Some(last), true) => Ok(last.clone()),
            _ => Err(OracleError::Transport("scripted oracle exhausted".to_string())),
        }
    }
}

/// Adapts a closure to [`OracleClient`], for tests that need to inspect the
/// rendered prompts or compute responses from them.
pub struct FnOracle<F>(pub F);

impl<F> OracleClient for FnOracle<F>
where
    F: FnMut(&str, &str) -> Result<String, OracleError>,
{
    fn complete(&mut self, system: &str, user: &str) -> Result<String, OracleError> {
        self.0(system, user)
    }
}
