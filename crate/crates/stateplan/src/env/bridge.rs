//! Line-oriented bridge so external environments can attach without linking:
//! one JSON request per line in, one JSON response per line out, over a
//! subprocess's stdio or a socket.
//!
//! [`serve_env`] is the other half: it exposes any in-process [`EnvAdapter`]
//! over the same protocol, which is also how the tests exercise the client.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};

use serde::{Deserialize, Serialize};

use super::{EnvAdapter, EnvError, StepOutcome, TaskInfo};

/// One request line. `op` selects the adapter call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum BridgeRequest {
    Reset,
    Step { action: String },
    Describe,
    AccessibleObjects,
    ActionTemplates,
    Inventory,
}

/// One response line. `kind` mirrors the request's expected payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BridgeResponse {
    Observation {
        observation: String,
    },
    Step {
        observation: String,
        raw_reward: f64,
        done: bool,
        valid: bool,
    },
    Task {
        objective: String,
        description: String,
    },
    Texts {
        items: Vec<String>,
    },
    Error {
        message: String,
    },
}

/// Client side: an [`EnvAdapter`] whose calls round-trip over the line
/// protocol.
pub struct LineBridgeEnv {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
}

impl LineBridgeEnv {
    /// Attach to a serving environment over TCP.
    pub fn connect_tcp(addr: &str) -> Result<LineBridgeEnv, EnvError> {
        let stream = TcpStream::connect(addr)?;
        let reader = stream.try_clone()?;
        Ok(LineBridgeEnv {
            reader: Box::new(BufReader::new(reader)),
            writer: Box::new(stream),
            child: None,
        })
    }

    /// Spawn `command` and speak the protocol over its stdio.
    pub fn from_command(command: &mut Command) -> Result<LineBridgeEnv, EnvError> {
        let mut child = command
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take().expect("piped stdin");
        Ok(LineBridgeEnv {
            reader: Box::new(BufReader::new(stdout)),
            writer: Box::new(stdin),
            child: Some(child),
        })
    }

    /// Attach to an already-connected byte stream (tests use socket pairs).
    pub fn from_stream<R, W>(read: R, write: W) -> LineBridgeEnv
    where
        R: std::io::Read + Send + 'static,
        W: Write + Send + 'static,
    {
        LineBridgeEnv {
            reader: Box::new(BufReader::new(read)),
            writer: Box::new(write),
            child: None,
        }
    }

    fn round_trip(&mut self, request: &BridgeRequest) -> Result<BridgeResponse, EnvError> {
        let mut line = serde_json::to_string(request)
            .map_err(|e| EnvError::Protocol(format!("encode request: {e}")))?;
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;

        let mut reply = String::new();
        if self.reader.read_line(&mut reply)? == 0 {
            return Err(EnvError::Closed);
        }
        let response: BridgeResponse = serde_json::from_str(reply.trim_end())
            .map_err(|e| EnvError::Protocol(format!("bad response line: {e}")))?;
        if let BridgeResponse::Error { message } = response {
            return Err(EnvError::Protocol(message));
        }
        Ok(response)
    }
}

impl Drop for LineBridgeEnv {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl EnvAdapter for LineBridgeEnv {
    fn reset(&mut self) -> Result<String, EnvError> {
        match self.round_trip(&BridgeRequest::Reset)? {
            BridgeResponse::Observation { observation } => Ok(observation),
            other => Err(unexpected("observation", &other)),
        }
    }

    fn step(&mut self, action: &str) -> Result<StepOutcome, EnvError> {
        let request = BridgeRequest::Step {
            action: action.to_string(),
        };
        match self.round_trip(&request)? {
            BridgeResponse::Step {
                observation,
                raw_reward,
                done,
                valid,
            } => Ok(StepOutcome {
                observation,
                raw_reward,
                done,
                valid,
            }),
            other => Err(unexpected("step", &other)),
        }
    }

    fn describe(&mut self) -> Result<TaskInfo, EnvError> {
        match self.round_trip(&BridgeRequest::Describe)? {
            BridgeResponse::Task {
                objective,
                description,
            } => Ok(TaskInfo {
                objective,
                description,
            }),
            other => Err(unexpected("task", &other)),
        }
    }

    fn accessible_objects(&mut self) -> Result<Vec<String>, EnvError> {
        match self.round_trip(&BridgeRequest::AccessibleObjects)? {
            BridgeResponse::Texts { items } => Ok(items),
            other => Err(unexpected("texts", &other)),
        }
    }

    fn action_templates(&mut self) -> Result<Vec<String>, EnvError> {
        match self.round_trip(&BridgeRequest::ActionTemplates)? {
            BridgeResponse::Texts { items } => Ok(items),
            other => Err(unexpected("texts", &other)),
        }
    }

    fn inventory(&mut self) -> Result<String, EnvError> {
        match self.round_trip(&BridgeRequest::Inventory)? {
            BridgeResponse::Observation { observation } => Ok(observation),
            other => Err(unexpected("observation", &other)),
        }
    }
}

fn unexpected(wanted: &str, got: &BridgeResponse) -> EnvError {
    EnvError::Protocol(format!("expected {wanted} response, got {got:?}"))
}

/// Serve `env` over the protocol until the peer closes the connection.
///
/// Adapter errors are reported as error lines, not connection failures, so a
/// single bad action does not tear down the session.
pub fn serve_env<R, W>(env: &mut dyn EnvAdapter, read: R, mut write: W) -> Result<(), EnvError>
where
    R: std::io::Read,
    W: Write,
{
    let reader = BufReader::new(read);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<BridgeRequest>(&line) {
            Ok(request) => dispatch(env, &request),
            Err(e) => BridgeResponse::Error {
                message: format!("bad request line: {e}"),
            },
        };
        let mut out = serde_json::to_string(&response)
            .map_err(|e| EnvError::Protocol(format!("encode response: {e}")))?;
        out.push('\n');
        write.write_all(out.as_bytes())?;
        write.flush()?;
    }
    Ok(())
}

fn dispatch(env: &mut dyn EnvAdapter, request: &BridgeRequest) -> BridgeResponse {
    let result = match request {
        BridgeRequest::Reset => env.reset().map(|observation| BridgeResponse::Observation {
            observation,
        }),
        BridgeRequest::Step { action } => env.step(action).map(|out| BridgeResponse::Step {
            observation: out.observation,
            raw_reward: out.raw_reward,
            done: out.done,
            valid: out.valid,
        }),
        BridgeRequest::Describe => env.describe().map(|task| BridgeResponse::Task {
            objective: task.objective,
            description: task.description,
        }),
        BridgeRequest::AccessibleObjects => env
            .accessible_objects()
            .map(|items| BridgeResponse::Texts { items }),
        BridgeRequest::ActionTemplates => env
            .action_templates()
            .map(|items| BridgeResponse::Texts { items }),
        BridgeRequest::Inventory => env.inventory().map(|observation| {
            BridgeResponse::Observation { observation }
        }),
    };
    result.unwrap_or_else(|e| BridgeResponse::Error {
        message: e.to_string(),
    })
}
