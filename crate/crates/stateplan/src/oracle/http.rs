//! Chat-completion backend over HTTP.

use serde::{Deserialize, Serialize};

use super::{OracleClient, OracleError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Full URL of the chat completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key. Unset or empty
    /// means the request is sent without an Authorization header.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: [WireMessage<'a>; 2],
    temperature: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireContent,
}

#[derive(Deserialize)]
struct WireContent {
    content: String,
}

pub struct HttpOracle {
    config: HttpConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpOracle {
    /// Reads the credential from the configured environment variable at
    /// construction time so a missing key fails before any run starts.
    pub fn new(config: HttpConfig) -> Result<Self, OracleError> {
        let api_key = match config.api_key_env.as_deref() {
            Some(var) if !var.is_empty() => Some(std::env::var(var).map_err(|_| {
                OracleError::Transport(format!("environment variable {var} is not set"))
            })?),
            _ => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| OracleError::Transport(e.to_string()))?;
        Ok(HttpOracle { config, api_key, client })
    }
}

impl OracleClient for HttpOracle {
    fn complete(&mut self, system: &str, user: &str) -> Result<String, OracleError> {
        let body = WireRequest {
            model: &self.config.model,
            messages: [
                WireMessage { role: "system", content: system },
                WireMessage { role: "user", content: user },
            ],
            temperature: self.config.temperature,
        };
        let mut request = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| OracleError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(OracleError::Transport(format!("HTTP {status}: {text}")));
        }
        let parsed: WireResponse =
            response.json().map_err(|e| OracleError::Transport(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| OracleError::Transport("response contained no choices".to_string()))
    }
}
