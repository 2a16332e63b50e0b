//! The three subcommands: run a session, inspect a graph file, replay a
//! trace log.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use stateplan::agent::{RunReport, SolveSession, TraceLine};
use stateplan::env::bridge::LineBridgeEnv;
use stateplan::env::{EnvAdapter, ToyWorld};
use stateplan::graph::{self, StateGraph, StateId};
use stateplan::oracle::{HttpConfig, HttpOracle, Oracle, OracleClient, ScriptedOracle};

use crate::config::{EnvKind, OracleKind, RunConfig};
use crate::persist::{load_graph, load_learnings, save_graph, save_learnings, LockGuard};
use crate::CliError;

/// Loads (or initializes) the graph and learnings named by the config, runs
/// the solve loop, and persists everything atomically: graph + learnings
/// after every episode, the report at the end.
pub fn cmd_run(config_path: &Path) -> Result<RunReport, CliError> {
    let cfg = RunConfig::load(config_path)?;

    let mut env: Box<dyn EnvAdapter> = match cfg.env.kind {
        EnvKind::Toy => Box::new(ToyWorld::default()),
        EnvKind::Bridge => {
            let address = cfg.env.address.as_deref().expect("validated");
            Box::new(LineBridgeEnv::connect_tcp(address)?)
        }
    };
    let client: Box<dyn OracleClient> = match cfg.oracle.kind {
        OracleKind::Mock => {
            let script = cfg.oracle.script.as_deref().expect("validated");
            Box::new(ScriptedOracle::from_file(script)?)
        }
        OracleKind::Http => Box::new(HttpOracle::new(HttpConfig {
            endpoint: cfg.oracle.endpoint.clone().expect("validated"),
            model: cfg.oracle.model.clone().expect("validated"),
            api_key_env: cfg.oracle.api_key_env.clone(),
            temperature: cfg.oracle.temperature.unwrap_or(0.0),
            timeout_secs: cfg.oracle.timeout_secs.unwrap_or(120),
        })?),
    };

    let _lock = LockGuard::acquire(&cfg.paths.graph)?;
    let (mut graph, _) = match load_graph(&cfg.paths.graph)? {
        Some(loaded) => loaded,
        None => (StateGraph::new(&cfg.values), cfg.values.clone()),
    };
    let mut learnings = load_learnings(&cfg.paths.learnings)?;

    fs::create_dir_all(&cfg.paths.log_dir)?;
    let trace_log = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(cfg.paths.log_dir.join("trace.jsonl"))?;
    let call_log = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(cfg.paths.log_dir.join("oracle_calls.jsonl"))?;

    let mut oracle = Oracle::new(client).with_call_log(Box::new(call_log));
    if let Some(retries) = cfg.oracle.max_retries {
        oracle = oracle.with_max_retries(retries);
    }

    let started_at = chrono::Utc::now().to_rfc3339();
    let graph_path = cfg.paths.graph.clone();
    let learnings_path = cfg.paths.learnings.clone();
    let values_echo = cfg.values.clone();
    let mut report = {
        let mut session = SolveSession::new(
            env.as_mut(),
            &mut graph,
            &mut oracle,
            &mut learnings,
            cfg.values.clone(),
            cfg.episode.clone(),
            cfg.seed,
        )?
        .with_trace_log(Box::new(trace_log))
        .with_checkpoint(Box::new(move |g, l| {
            save_graph(&graph_path, g, &values_echo)?;
            save_learnings(&learnings_path, l)
        }));
        session.run()
    };
    report.started_at = Some(started_at);
    report.finished_at = Some(chrono::Utc::now().to_rfc3339());

    // Episodes already checkpointed; this covers the no-episode edge case.
    save_graph(&cfg.paths.graph, &graph, &cfg.values)?;
    save_learnings(&cfg.paths.learnings, &learnings)?;
    let mut report_bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    report_bytes.push(b'\n');
    crate::persist::atomic_write(&cfg.paths.log_dir.join("report.json"), &report_bytes)?;

    let summary = print_summary(&report);
    if let Some(error) = &report.error {
        return Err(CliError::Run(error.clone()));
    }
    summary?;
    Ok(report)
}

// Output goes through writeln! so a closed pipe surfaces as an error for
// main to swallow instead of a println! panic.
fn print_summary(report: &RunReport) -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    let raw: f64 = report.episodes.iter().map(|e| e.cumulative_raw_reward).sum();
    writeln!(out, "episodes: {}", report.episodes.len())?;
    writeln!(out, "interactions: {}", report.total_interactions)?;
    writeln!(out, "cumulative raw reward: {raw}")?;
    writeln!(out, "solved: {}", report.solved)?;
    for episode in &report.episodes {
        if let Some(error) = &episode.error {
            writeln!(out, "episode {} error: {error}", episode.index)?;
        }
    }
    Ok(())
}

/// Prints node/edge counts and the top states by augmented value; with
/// `report`, also a per-episode reward table for plotting.
pub fn cmd_inspect(graph_path: &Path, top: usize, report: Option<&Path>) -> Result<(), CliError> {
    let bytes = fs::read(graph_path)
        .map_err(|e| CliError::Config(format!("read {}: {e}", graph_path.display())))?;
    let (graph, cfg) = graph::deserialize(&bytes)?;
    let mut out = std::io::stdout().lock();

    writeln!(out, "graph: {}", graph_path.display())?;
    writeln!(
        out,
        "nodes: {} data ({} including reserved)",
        graph.data_node_count(),
        graph.nodes().count()
    )?;
    writeln!(
        out,
        "edges: {} ({} to the invalid sink)",
        graph.edge_count(),
        graph.invalid_edge_count()
    )?;
    let episodes = graph.node(StateId::ROOT).map_or(0, |n| n.visits);
    writeln!(out, "episodes recorded: {episodes}")?;

    let mut ranked: Vec<&stateplan::graph::StateNode> = graph
        .nodes()
        .filter(|n| n.id != StateId::ROOT && n.id != StateId::INVALID)
        .collect();
    ranked.sort_by(|a, b| {
        graph
            .augmented_value_of(b.id, &cfg)
            .partial_cmp(&graph.augmented_value_of(a.id, &cfg))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.id.cmp(&b.id))
    });
    writeln!(out, "top {} states by augmented value:", top.min(ranked.len()))?;
    writeln!(out, "{:<12} {:>10} {:>10} {:>7}  state", "id", "v+", "value", "visits")?;
    for node in ranked.iter().take(top) {
        let v_plus = graph.augmented_value_of(node.id, &cfg);
        let head = node.description.lines().next().unwrap_or("");
        let head: String = head.chars().take(60).collect();
        writeln!(
            out,
            "{:<12} {:>10.6} {:>10.6} {:>7}  {}",
            node.id.short(),
            v_plus,
            node.value,
            node.visits,
            head
        )?;
    }

    if let Some(report_path) = report {
        let raw = fs::read_to_string(report_path)
            .map_err(|e| CliError::Config(format!("read {}: {e}", report_path.display())))?;
        let report: RunReport = serde_json::from_str(&raw)
            .map_err(|e| CliError::Config(format!("{}: {e}", report_path.display())))?;
        writeln!(out)?;
        writeln!(out, "episode interactions raw transformed")?;
        for episode in &report.episodes {
            writeln!(
                out,
                "{} {} {} {}",
                episode.index,
                episode.interactions,
                episode.cumulative_raw_reward,
                episode.cumulative_transformed_reward
            )?;
        }
    }
    Ok(())
}

/// Renders a trace log (one JSON record per executed step) as readable text.
pub fn cmd_replay(log_path: &Path) -> Result<(), CliError> {
    let file = fs::File::open(log_path)
        .map_err(|e| CliError::Config(format!("read {}: {e}", log_path.display())))?;
    let mut out = std::io::stdout().lock();
    for (number, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: TraceLine = serde_json::from_str(&line).map_err(|e| {
            CliError::Config(format!("{}:{}: {e}", log_path.display(), number + 1))
        })?;
        let record = &entry.record;
        let observation = record.observation.lines().next().unwrap_or("");
        let tag = if record.valid {
            format!("{:+.4}", record.raw_reward)
        } else {
            "invalid".to_string()
        };
        writeln!(
            out,
            "e{} r{}  {} -> {} [{}]",
            entry.episode, entry.round, record.action, observation, tag
        )?;
    }
    Ok(())
}
