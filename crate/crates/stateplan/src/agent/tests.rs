use std::sync::{Arc, Mutex};

use super::*;
use crate::env::{ToyWorld, CANONICAL_PLAN};
use crate::graph::StateGraph;
use crate::oracle::{FnOracle, OracleError, ScriptedOracle, EXPLORATION_OBJECTIVE};

fn plan_json(actions: &[&str]) -> String {
    serde_json::to_string(actions).unwrap()
}

fn episode_cfg(max_episodes: u32, rounds: u32) -> EpisodeConfig {
    EpisodeConfig { rounds_per_episode: rounds, max_episodes, ..EpisodeConfig::default() }
}

/// Runs a fresh toy world against `oracle` and returns the report plus the
/// final graph and learnings.
fn run_toy(
    oracle: Oracle,
    episode_cfg: EpisodeConfig,
    seed: u64,
) -> (RunReport, StateGraph, Learnings) {
    let mut env = ToyWorld::default();
    let value_cfg = ValueConfig::default();
    let mut graph = StateGraph::new(&value_cfg);
    let mut oracle = oracle;
    let mut learnings = Learnings::default();
    let report = {
        let mut session = SolveSession::new(
            &mut env,
            &mut graph,
            &mut oracle,
            &mut learnings,
            value_cfg,
            episode_cfg,
            seed,
        )
        .unwrap();
        session.run()
    };
    (report, graph, learnings)
}

#[derive(Clone, Default)]
struct SharedBuf(Arc<Mutex<Vec<u8>>>);

impl SharedBuf {
    fn contents(&self) -> String {
        String::from_utf8(self.0.lock().unwrap().clone()).unwrap()
    }
}

impl std::io::Write for SharedBuf {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

// --- solve loop ---

#[test]
fn canonical_plan_solves_in_episode_one() {
    let script = ScriptedOracle::new([
        plan_json(&CANONICAL_PLAN),
        plan_json(&["key opens pantry door"]), // learner output
    ]);
    let (report, graph, learnings) =
        run_toy(Oracle::new(Box::new(script)), EpisodeConfig::default(), 7);

    assert!(report.solved);
    assert!(report.error.is_none());
    assert_eq!(report.episodes.len(), 1);
    assert_eq!(report.total_interactions, CANONICAL_PLAN.len() as u64);

    let episode = &report.episodes[0];
    assert!(episode.error.is_none());
    assert_eq!(episode.interactions, 6);
    assert!((episode.cumulative_raw_reward - 1.0).abs() < 1e-12);
    assert_eq!(episode.feedback, FEEDBACK_SOLVED);
    assert_eq!(episode.rounds.len(), 1);

    let round = &episode.rounds[0];
    assert_eq!(round.stop_reason, StopReason::Leaf);
    assert!(round.committed_actions.is_empty());
    assert_eq!(round.oracle_actions, CANONICAL_PLAN);
    assert!(round.steps.iter().all(|s| s.valid));
    assert!(round.steps.last().unwrap().raw_reward > 0.0);

    // one node per distinct state along the solution path
    assert_eq!(graph.data_node_count(), 7);
    assert_eq!(learnings.axioms(), ["key opens pantry door"]);
}

#[test]
fn degenerate_oracle_still_counts_episodes() {
    let script = ScriptedOracle::new(["[]"]).repeating_last();
    let (report, graph, learnings) =
        run_toy(Oracle::new(Box::new(script)), episode_cfg(3, 2), 7);

    assert!(!report.solved);
    assert!(report.error.is_none());
    assert_eq!(report.episodes.len(), 3);
    assert_eq!(report.total_interactions, 0);
    for episode in &report.episodes {
        assert!(episode.error.is_none());
        assert_eq!(episode.feedback, FEEDBACK_NO_PROGRESS);
        assert_eq!(episode.rounds.len(), 2);
    }
    // only the start state was ever visited, once per episode
    assert_eq!(graph.data_node_count(), 1);
    assert_eq!(graph.node(crate::graph::StateId::ROOT).unwrap().visits, 3);
    for node in graph.nodes() {
        if node.id != crate::graph::StateId::INVALID && node.id != crate::graph::StateId::ROOT {
            assert!(node.visits >= 3);
        }
    }
    // no steps executed, so the learner never ran
    assert!(learnings.is_empty());
}

#[test]
fn identical_runs_produce_identical_reports() {
    let make_oracle = || {
        Oracle::new(Box::new(ScriptedOracle::new([
            plan_json(&["go kitchen", "open drawer"]),
            plan_json(&["drawer holds key"]),
            plan_json(&CANONICAL_PLAN),
            plan_json(&["key opens pantry door", "drawer holds key"]),
        ])))
    };
    let cfg = episode_cfg(4, 1);
    let (a, graph_a, learnings_a) = run_toy(make_oracle(), cfg.clone(), 42);
    let (b, graph_b, learnings_b) = run_toy(make_oracle(), cfg, 42);

    assert_eq!(a, b);
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert_eq!(graph_a, graph_b);
    assert_eq!(learnings_a, learnings_b);
}

#[test]
fn learnings_reach_the_next_episode_prompt() {
    let prompts: Arc<Mutex<Vec<String>>> = Arc::default();
    let seen = Arc::clone(&prompts);
    let mut responses = vec![
        plan_json(&["go kitchen"]),           // episode 1, round 1
        plan_json(&["kitchen holds drawer"]), // episode 1 learner
        plan_json(&[] as &[&str]),            // episode 2, round 1
    ]
    .into_iter();
    let client = FnOracle(move |_system: &str, user: &str| {
        seen.lock().unwrap().push(user.to_string());
        responses
            .next()
            .ok_or_else(|| OracleError::Transport("script exhausted".to_string()))
    });
    let (report, _, learnings) =
        run_toy(Oracle::new(Box::new(client)), episode_cfg(2, 1), 7);

    assert!(!report.solved);
    assert_eq!(learnings.axioms(), ["kitchen holds drawer"]);

    let prompts = prompts.lock().unwrap();
    assert!(prompts.len() >= 3);
    assert!(!prompts[0].contains("kitchen holds drawer"));
    // episode 2's planner prompt carries episode 1's belief axiom
    assert!(prompts[2].contains("kitchen holds drawer"));
}

#[test]
fn goal_reward_threshold_counts_as_solved() {
    let script = ScriptedOracle::new([
        plan_json(&["go kitchen"]),
        plan_json(&["kitchen is reachable"]),
    ]);
    let cfg = EpisodeConfig { goal_reward: 0.25, ..episode_cfg(3, 2) };
    let (report, _, _) = run_toy(Oracle::new(Box::new(script)), cfg, 7);

    assert!(report.solved);
    assert_eq!(report.episodes.len(), 1);
    assert_eq!(report.total_interactions, 1);
    assert_eq!(report.episodes[0].feedback, FEEDBACK_SOLVED);
}

#[test]
fn format_failures_leave_an_empty_oracle_suffix() {
    let script = ScriptedOracle::new(["no plan here", "still chatting", "sorry"]);
    let (report, _, _) = run_toy(Oracle::new(Box::new(script)), episode_cfg(1, 1), 7);

    assert!(!report.solved);
    assert!(report.error.is_none());
    let episode = &report.episodes[0];
    assert!(episode.error.is_none(), "format failure is soft: {:?}", episode.error);
    assert!(episode.rounds[0].oracle_actions.is_empty());
    assert!(episode.rounds[0].steps.is_empty());
}

#[test]
fn transport_failure_aborts_episode_not_run() {
    // one plan, then the script runs dry: the learner call fails in episode
    // 1 and the planner call fails in episode 2
    let script = ScriptedOracle::new([plan_json(&["go kitchen"])]);
    let (report, graph, _) = run_toy(Oracle::new(Box::new(script)), episode_cfg(2, 1), 7);

    assert!(!report.solved);
    assert!(report.error.is_none());
    assert_eq!(report.episodes.len(), 2);
    assert!(report.episodes[0].error.as_deref().unwrap().contains("learner failed"));
    assert!(report.episodes[1].error.as_deref().unwrap().contains("oracle failed"));
    // the step from the first episode still reached the graph
    assert_eq!(report.episodes[0].interactions, 1);
    assert!(graph.data_node_count() >= 2);
}

#[test]
fn checkpoint_runs_per_episode_and_failure_is_fatal() {
    let count = Arc::new(Mutex::new(0u32));
    {
        let script = ScriptedOracle::new(["[]"]).repeating_last();
        let mut env = ToyWorld::default();
        let value_cfg = ValueConfig::default();
        let mut graph = StateGraph::new(&value_cfg);
        let mut oracle = Oracle::new(Box::new(script));
        let mut learnings = Learnings::default();
        let seen = Arc::clone(&count);
        let mut session = SolveSession::new(
            &mut env,
            &mut graph,
            &mut oracle,
            &mut learnings,
            value_cfg,
            episode_cfg(3, 1),
            7,
        )
        .unwrap()
        .with_checkpoint(Box::new(move |_, _| {
            *seen.lock().unwrap() += 1;
            Ok(())
        }));
        let report = session.run();
        assert!(report.error.is_none());
    }
    assert_eq!(*count.lock().unwrap(), 3);

    // a failing checkpoint stops the run
    let script = ScriptedOracle::new(["[]"]).repeating_last();
    let mut env = ToyWorld::default();
    let value_cfg = ValueConfig::default();
    let mut graph = StateGraph::new(&value_cfg);
    let mut oracle = Oracle::new(Box::new(script));
    let mut learnings = Learnings::default();
    let mut session = SolveSession::new(
        &mut env,
        &mut graph,
        &mut oracle,
        &mut learnings,
        value_cfg,
        episode_cfg(3, 1),
        7,
    )
    .unwrap()
    .with_checkpoint(Box::new(|_, _| {
        Err(std::io::Error::new(std::io::ErrorKind::Other, "disk full"))
    }));
    let report = session.run();
    assert_eq!(report.episodes.len(), 1);
    assert!(report.error.as_deref().unwrap().contains("checkpoint failed"));
}

#[test]
fn trace_log_captures_every_step() {
    let buf = SharedBuf::default();
    let script = ScriptedOracle::new([
        plan_json(&CANONICAL_PLAN),
        plan_json(&["key opens pantry door"]),
    ]);
    let mut env = ToyWorld::default();
    let value_cfg = ValueConfig::default();
    let mut graph = StateGraph::new(&value_cfg);
    let mut oracle = Oracle::new(Box::new(script));
    let mut learnings = Learnings::default();
    let report = {
        let mut session = SolveSession::new(
            &mut env,
            &mut graph,
            &mut oracle,
            &mut learnings,
            value_cfg,
            EpisodeConfig::default(),
            7,
        )
        .unwrap()
        .with_trace_log(Box::new(buf.clone()));
        session.run()
    };

    let lines: Vec<TraceLine> = buf
        .contents()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 6);
    assert!(lines.iter().all(|l| l.episode == 1 && l.round == 1));
    let logged: Vec<_> = lines.into_iter().map(|l| l.record).collect();
    assert_eq!(logged, report.episodes[0].rounds[0].steps);
}

#[test]
fn exploration_substitution_is_seed_driven_and_visible_in_prompts() {
    let run_with_seed = |seed: u64| {
        let prompts: Arc<Mutex<Vec<String>>> = Arc::default();
        let seen = Arc::clone(&prompts);
        let client = FnOracle(move |_system: &str, user: &str| {
            seen.lock().unwrap().push(user.to_string());
            Ok("[]".to_string())
        });
        let (report, _, _) = run_toy(Oracle::new(Box::new(client)), episode_cfg(1, 1), seed);
        let used = report.episodes[0].rounds[0].used_exploration_objective;
        let prompt = prompts.lock().unwrap()[0].clone();
        (used, prompt)
    };

    let mut saw_substituted = false;
    let mut saw_plain = false;
    for seed in 0..100 {
        let (used, prompt) = run_with_seed(seed);
        if used {
            assert!(prompt.contains(EXPLORATION_OBJECTIVE));
            saw_substituted = true;
        } else {
            assert!(prompt.contains("Unlock and open the pantry door."));
            assert!(!prompt.contains(EXPLORATION_OBJECTIVE));
            saw_plain = true;
        }
        if saw_substituted && saw_plain {
            return;
        }
    }
    panic!("expected both outcomes across 100 seeds (σ=0.3 gives p≈0.43)");
}

#[test]
fn graph_only_grows_across_rounds_and_episodes() {
    let script = ScriptedOracle::new([
        plan_json(&["go kitchen", "eat wall"]),
        plan_json(&["kitchen exists"]),
        plan_json(&["go kitchen", "open drawer"]),
        plan_json(&["drawer opens"]),
    ]);
    let (report, graph, _) = run_toy(Oracle::new(Box::new(script)), episode_cfg(2, 1), 7);

    assert_eq!(report.episodes.len(), 2);
    let e1 = &report.episodes[0];
    let e2 = &report.episodes[1];
    assert_eq!(e1.interactions, 2);
    // episode 2 runs its oracle suffix after a possibly committed prefix
    assert!(e2.interactions >= 2);
    assert!(e1.rounds[0].steps[1].state_id == crate::graph::StateId::INVALID);
    assert!(graph.invalid_edge_count() >= 1);
    assert!(graph.data_node_count() >= 3);
    // revisited states accumulate visits
    let start_visits: Vec<u64> = graph
        .nodes()
        .filter(|n| n.description.contains("hallway"))
        .map(|n| n.visits)
        .collect();
    assert!(start_visits.iter().any(|&v| v >= 2));
}

// --- feedback ladder ---

#[test]
fn feedback_bands_cover_the_ladder() {
    assert_eq!(get_feedback(0.0, 1.0), FEEDBACK_NO_PROGRESS);
    assert_eq!(get_feedback(-0.5, 1.0), FEEDBACK_NO_PROGRESS);
    assert_eq!(get_feedback(0.25, 1.0), FEEDBACK_SOME_PROGRESS);
    assert_eq!(get_feedback(0.49, 1.0), FEEDBACK_SOME_PROGRESS);
    assert_eq!(get_feedback(0.5, 1.0), FEEDBACK_GOOD_PROGRESS);
    assert_eq!(get_feedback(0.99, 1.0), FEEDBACK_GOOD_PROGRESS);
    assert_eq!(get_feedback(1.0, 1.0), FEEDBACK_SOLVED);
    assert_eq!(get_feedback(1.5, 1.0), FEEDBACK_SOLVED);
    // scales with the goal
    assert_eq!(get_feedback(42.0, 100.0), FEEDBACK_SOME_PROGRESS);
    assert_eq!(get_feedback(75.0, 100.0), FEEDBACK_GOOD_PROGRESS);
}

#[test]
fn feedback_sentence_matches_reported_band() {
    let script = ScriptedOracle::new([
        plan_json(&["go kitchen"]), // 0.25 of 1.0
        plan_json(&["kitchen is reachable"]),
    ]);
    let (report, _, _) = run_toy(Oracle::new(Box::new(script)), episode_cfg(1, 1), 7);
    let episode = &report.episodes[0];
    assert!((episode.cumulative_raw_reward - 0.25).abs() < 1e-12);
    assert_eq!(episode.feedback, FEEDBACK_SOME_PROGRESS);
    assert!(episode.cumulative_transformed_reward > 0.0);
    assert!(episode.cumulative_transformed_reward < episode.cumulative_raw_reward + 1e-12);
}

// --- config validation ---

#[test]
fn config_bounds_are_enforced() {
    assert!(EpisodeConfig::default().validate().is_ok());
    let bad = [
        EpisodeConfig { rounds_per_episode: 0, ..EpisodeConfig::default() },
        EpisodeConfig { max_episodes: 0, ..EpisodeConfig::default() },
        EpisodeConfig { sigma: 0.0, ..EpisodeConfig::default() },
        EpisodeConfig { sigma: 0.5, ..EpisodeConfig::default() },
        EpisodeConfig { sigma: -0.1, ..EpisodeConfig::default() },
        EpisodeConfig { goal_reward: 0.0, ..EpisodeConfig::default() },
        EpisodeConfig { goal_reward: f64::NAN, ..EpisodeConfig::default() },
    ];
    for cfg in bad {
        assert!(cfg.validate().is_err(), "{cfg:?} should fail validation");
    }

    let mut env = ToyWorld::default();
    let value_cfg = ValueConfig::default();
    let mut graph = StateGraph::new(&value_cfg);
    let mut oracle = Oracle::new(Box::new(ScriptedOracle::default()));
    let mut learnings = Learnings::default();
    let result = SolveSession::new(
        &mut env,
        &mut graph,
        &mut oracle,
        &mut learnings,
        value_cfg,
        EpisodeConfig { sigma: 0.5, ..EpisodeConfig::default() },
        0,
    );
    assert!(matches!(result, Err(AgentError::Config(_))));
}
