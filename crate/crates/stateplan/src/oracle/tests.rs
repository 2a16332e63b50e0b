use std::io::Write;
use std::sync::{Arc, Mutex};

use rand::rngs::mock::StepRng;

use super::prompts::{render_action_plan_prompt, render_instructions, FORMAT_REMINDER};
use super::*;
use crate::env::ObsRecord;

fn ctx() -> PromptContext {
    PromptContext {
        objective: "Unlock and open the pantry door.".to_string(),
        prior_axioms: "You are in a small house.".to_string(),
        learnings: Learnings::new(vec![
            "key is inside drawer".to_string(),
            "pantry door needs key".to_string(),
        ]),
        current_state_text: "You are in the hallway.\nYou can access: kitchen, pantry door"
            .to_string(),
        avoided_actions: vec!["eat wall".to_string(), "open pantry door".to_string()],
        trace: "action: look around\nobservation: You are in the hallway.".to_string(),
        plan_examples: DEFAULT_PLAN_EXAMPLES.to_string(),
    }
}

#[derive(Clone, Default)]
struct SharedBuf(Arc<Mutex<Vec<u8>>>);

impl SharedBuf {
    fn contents(&self) -> String {
        String::from_utf8(self.0.lock().unwrap().clone()).unwrap()
    }
}

impl Write for SharedBuf {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

// --- prompt rendering ---

#[test]
fn rendering_is_pure() {
    let a = render_action_plan_prompt(&ctx());
    let b = render_action_plan_prompt(&ctx());
    assert_eq!(a, b);
}

#[test]
fn prompt_carries_all_context_fields() {
    let c = ctx();
    let (system, user) = render_action_plan_prompt(&c);
    assert!(system.contains(&c.plan_examples));
    assert!(system.contains(&c.trace));
    assert!(user.contains(&c.objective));
    assert!(user.contains(&c.prior_axioms));
    assert!(user.contains("key is inside drawer\npantry door needs key"));
    assert!(user.contains(&c.current_state_text));
    assert!(user.contains("ADDITIONAL INSTRUCTIONS:"));
}

#[test]
fn avoided_actions_appear_verbatim_under_avoid_block() {
    let c = ctx();
    let instructions = render_instructions(&c);
    let block_start = instructions
        .find("STRICTLY AVOID the following IMMEDIATE ACTIONS")
        .expect("avoid block present");
    let tail = &instructions[block_start..];
    assert!(tail.contains("eat wall"));
    assert!(tail.contains("open pantry door"));
    assert!(tail.ends_with("eat wall\nopen pantry door"));
}

#[test]
fn empty_avoid_list_omits_block() {
    let mut c = ctx();
    c.avoided_actions.clear();
    let instructions = render_instructions(&c);
    assert!(!instructions.contains("STRICTLY AVOID"));
    assert!(instructions.ends_with("find rest of the action plan."));
}

#[test]
fn exploration_objective_replaces_task_objective_in_prompt() {
    let mut c = ctx();
    c.objective = EXPLORATION_OBJECTIVE.to_string();
    let (_, user) = render_action_plan_prompt(&c);
    assert!(user.contains(EXPLORATION_OBJECTIVE));
    assert!(!user.contains("Unlock and open the pantry door."));
}

#[test]
fn trace_renders_action_observation_pairs() {
    let records = vec![
        ObsRecord { action: "go kitchen".to_string(), observation: "You enter.".to_string() },
        ObsRecord { action: "open drawer".to_string(), observation: "It opens.".to_string() },
    ];
    assert_eq!(
        render_trace(&records),
        "action: go kitchen\nobservation: You enter.\n\naction: open drawer\nobservation: It opens."
    );
    assert_eq!(render_trace(&[]), "");
}

// --- response parsing ---

#[test]
fn parses_plain_list() {
    let actions = parse_string_list(r#"["look around", "open door to greenhouse"]"#).unwrap();
    assert_eq!(actions, vec!["look around", "open door to greenhouse"]);
}

#[test]
fn parses_fenced_and_padded_lists() {
    let fenced = "```json\n[\"go kitchen\", \"open drawer\"]\n```";
    assert_eq!(parse_string_list(fenced).unwrap(), vec!["go kitchen", "open drawer"]);
    let bare_fence = "```\n[\"a\"]\n```";
    assert_eq!(parse_string_list(bare_fence).unwrap(), vec!["a"]);
    let padded = "  \n [\"x\", \"y\"] \n ";
    assert_eq!(parse_string_list(padded).unwrap(), vec!["x", "y"]);
    assert_eq!(parse_string_list("[]").unwrap(), Vec::<String>::new());
}

#[test]
fn parses_escaped_quotes() {
    let actions = parse_string_list(r#"["say \"hello\""]"#).unwrap();
    assert_eq!(actions, vec![r#"say "hello""#]);
}

#[test]
fn rejects_non_list_output() {
    assert!(parse_string_list("I think you should look around first.").is_err());
    assert!(parse_string_list("Here is the plan: [\"look around\"]").is_err());
    assert!(parse_string_list("[1, 2]").is_err());
    assert!(parse_string_list("{\"plan\": []}").is_err());
    assert!(parse_string_list("```\n[\"unclosed\"]").is_err());
    assert!(parse_string_list("").is_err());
}

// --- plan generation and retries ---

#[test]
fn plan_parses_on_first_attempt() {
    let mut oracle =
        Oracle::new(Box::new(ScriptedOracle::new([r#"["go kitchen", "open drawer"]"#])));
    let actions = oracle.generate_action_plan(&ctx()).unwrap();
    assert_eq!(actions, vec!["go kitchen", "open drawer"]);
}

#[test]
fn retry_appends_format_reminder_and_recovers() {
    let calls: Arc<Mutex<Vec<String>>> = Arc::default();
    let seen = Arc::clone(&calls);
    let mut responses =
        vec!["Sure! First you should explore.".to_string(), r#"["look around"]"#.to_string()]
            .into_iter();
    let client = FnOracle(move |_system: &str, user: &str| {
        seen.lock().unwrap().push(user.to_string());
        Ok(responses.next().unwrap())
    });
    let mut oracle = Oracle::new(Box::new(client));
    let actions = oracle.generate_action_plan(&ctx()).unwrap();
    assert_eq!(actions, vec!["look around"]);

    let calls = calls.lock().unwrap();
    assert_eq!(calls.len(), 2);
    assert!(!calls[0].contains(FORMAT_REMINDER));
    assert!(calls[1].contains(FORMAT_REMINDER));
    assert!(calls[1].starts_with(calls[0].as_str()));
}

#[test]
fn unparseable_after_retries_is_format_error() {
    let script = ScriptedOracle::new(["garbage one", "garbage two", "garbage three"]);
    let mut oracle = Oracle::new(Box::new(script)).with_max_retries(2);
    match oracle.generate_action_plan(&ctx()) {
        Err(OracleError::Format { attempts, last }) => {
            assert_eq!(attempts, 3);
            assert_eq!(last, "garbage three");
        }
        other => panic!("expected format error, got {other:?}"),
    }
}

#[test]
fn transport_error_aborts_without_retry() {
    let mut oracle = Oracle::new(Box::new(ScriptedOracle::default()));
    match oracle.generate_action_plan(&ctx()) {
        Err(OracleError::Transport(_)) => {}
        other => panic!("expected transport error, got {other:?}"),
    }
}

#[test]
fn call_log_records_each_attempt() {
    let buf = SharedBuf::default();
    let script = ScriptedOracle::new(["not a list", r#"["go kitchen"]"#]);
    let mut oracle = Oracle::new(Box::new(script)).with_call_log(Box::new(buf.clone()));
    oracle.generate_action_plan(&ctx()).unwrap();

    let lines: Vec<serde_json::Value> = buf
        .contents()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["purpose"], "action_plan");
    assert_eq!(lines[0]["attempt"], 1);
    assert_eq!(lines[0]["response"], "not a list");
    assert_eq!(lines[1]["attempt"], 2);
    assert_eq!(lines[1]["response"], r#"["go kitchen"]"#);
    assert!(lines[0]["system"].as_str().unwrap().contains("AI action planner"));
}

// --- learner ---

#[test]
fn learner_replaces_prior_axioms() {
    let prior = Learnings::new(vec!["old belief".to_string()]);
    let script = ScriptedOracle::new([r#"["key opens pantry door", "drawer contains key"]"#]);
    let mut oracle = Oracle::new(Box::new(script));
    let updated = oracle
        .update_learnings("objective", &prior, "action: x\nobservation: y", "feedback")
        .unwrap();
    assert_eq!(updated.axioms(), ["key opens pantry door", "drawer contains key"]);
}

#[test]
fn learner_prompt_embeds_trace_feedback_and_prior() {
    let calls: Arc<Mutex<Vec<(String, String)>>> = Arc::default();
    let seen = Arc::clone(&calls);
    let client = FnOracle(move |system: &str, user: &str| {
        seen.lock().unwrap().push((system.to_string(), user.to_string()));
        Ok(r#"["a b c"]"#.to_string())
    });
    let prior = Learnings::new(vec!["pantry door is locked".to_string()]);
    let mut oracle = Oracle::new(Box::new(client));
    oracle
        .update_learnings(
            "Unlock the pantry.",
            &prior,
            "action: go kitchen\nobservation: You enter.",
            "The agent performed poorly and made some progress but not enough to solve the task.",
        )
        .unwrap();

    let calls = calls.lock().unwrap();
    assert_eq!(calls.len(), 1);
    let (system, user) = &calls[0];
    assert!(system.contains("BELIEFAXIOMS"));
    assert!(system.contains("Unlock the pantry."));
    assert!(system.contains("pantry door is locked"));
    assert!(user.contains("action: go kitchen"));
    assert!(user.contains("performed poorly"));
}

#[test]
fn empty_trace_skips_learner_call() {
    let script = ScriptedOracle::new([r#"["should never be used"]"#]);
    let mut oracle = Oracle::new(Box::new(script));
    let prior = Learnings::new(vec!["keep me".to_string()]);
    let updated = oracle.update_learnings("objective", &prior, "   \n ", "feedback").unwrap();
    assert_eq!(updated, prior);
}

#[test]
fn learner_format_failure_keeps_prior() {
    let script = ScriptedOracle::new(["nope", "still nope", "no list here"]);
    let mut oracle = Oracle::new(Box::new(script));
    let prior = Learnings::new(vec!["keep me".to_string()]);
    let updated = oracle.update_learnings("objective", &prior, "action: x", "feedback").unwrap();
    assert_eq!(updated, prior);
}

#[test]
fn learner_transport_failure_propagates() {
    let mut oracle = Oracle::new(Box::new(ScriptedOracle::default()));
    let prior = Learnings::default();
    assert!(matches!(
        oracle.update_learnings("objective", &prior, "action: x", "feedback"),
        Err(OracleError::Transport(_))
    ));
}

// --- learnings hygiene ---

#[test]
fn learnings_drop_empty_underscore_and_duplicate_lines() {
    let learnings = Learnings::new(vec![
        "key opens pantry".to_string(),
        "".to_string(),
        "   ".to_string(),
        "drawer_contains key".to_string(),
        "key opens pantry".to_string(),
        "  key opens pantry  ".to_string(),
        "hallway connects kitchen".to_string(),
    ]);
    assert_eq!(learnings.axioms(), ["key opens pantry", "hallway connects kitchen"]);
    assert_eq!(learnings.len(), 2);
    assert!(!learnings.is_empty());
}

#[test]
fn learnings_serialize_as_quoted_string_list() {
    let learnings = Learnings::new(vec!["a b c".to_string(), "d e f".to_string()]);
    let json = serde_json::to_string(&learnings).unwrap();
    assert_eq!(json, r#"["a b c","d e f"]"#);
    let back: Learnings = serde_json::from_str(&json).unwrap();
    assert_eq!(back, learnings);
}

// --- exploration substitution ---

#[test]
fn exploration_probability_matches_closed_form() {
    let expected = 0.3 / 2f64.ln();
    assert!((exploration_probability(0.3, 2) - expected).abs() < 1e-12);
    // counts below 2 clamp to 2
    assert_eq!(exploration_probability(0.3, 0), exploration_probability(0.3, 2));
    assert_eq!(exploration_probability(0.3, 1), exploration_probability(0.3, 2));
    // capped at one half
    assert_eq!(exploration_probability(0.4, 2), 0.5);
    // decays with more exploration runs
    assert!(exploration_probability(0.3, 50) < exploration_probability(0.3, 5));
    assert!(exploration_probability(0.3, 1_000_000) > 0.0);
}

#[test]
fn substitution_swaps_objective_and_counts_uses() {
    let mut low = StepRng::new(0, 0); // draws 0.0 forever
    let mut c = ctx();
    let mut n = 0;
    assert!(maybe_substitute_objective(&mut c, &mut n, 0.3, &mut low));
    assert_eq!(c.objective, EXPLORATION_OBJECTIVE);
    assert_eq!(n, 1);
}

#[test]
fn substitution_never_fires_on_high_draws() {
    let mut high = StepRng::new(u64::MAX, 0); // draws just under 1.0 forever
    let mut c = ctx();
    let mut n = 0;
    for _ in 0..100 {
        assert!(!maybe_substitute_objective(&mut c, &mut n, 0.3, &mut high));
    }
    assert_eq!(c.objective, "Unlock and open the pantry door.");
    assert_eq!(n, 0);
}

// --- scripted oracle ---

#[test]
fn scripted_oracle_repeats_last_when_asked() {
    let mut script = ScriptedOracle::new(["one", "two"]).repeating_last();
    assert_eq!(script.complete("s", "u").unwrap(), "one");
    assert_eq!(script.complete("s", "u").unwrap(), "two");
    assert_eq!(script.complete("s", "u").unwrap(), "two");
    assert_eq!(script.complete("s", "u").unwrap(), "two");
    assert_eq!(script.calls().len(), 4);
}

#[test]
fn scripted_oracle_loads_both_file_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let bare = dir.path().join("bare.json");
    std::fs::write(&bare, r#"["[\"a\"]", "[\"b\"]"]"#).unwrap();
    let mut script = ScriptedOracle::from_file(&bare).unwrap();
    assert_eq!(script.complete("s", "u").unwrap(), r#"["a"]"#);
    assert_eq!(script.complete("s", "u").unwrap(), r#"["b"]"#);
    assert!(script.complete("s", "u").is_err());

    let tagged = dir.path().join("tagged.json");
    std::fs::write(&tagged, r#"{"responses": ["[]"], "repeat_last": true}"#).unwrap();
    let mut script = ScriptedOracle::from_file(&tagged).unwrap();
    assert_eq!(script.complete("s", "u").unwrap(), "[]");
    assert_eq!(script.complete("s", "u").unwrap(), "[]");

    assert!(ScriptedOracle::from_file(&dir.path().join("missing.json")).is_err());
}
