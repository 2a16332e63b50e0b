//! Prompt assembly for the two LLM roles. The templates are fixed text with
//! `{slot}` markers; rendering is pure string substitution so identical
//! context always yields byte-identical prompts.

use super::{Learnings, PromptContext};

/// Objective text swapped in when an exploration run is drawn.
pub const EXPLORATION_OBJECTIVE: &str =
    "Create a long sequence of actions to explore and know more about the environment";

/// Default few-shot output examples for the action planner.
pub const DEFAULT_PLAN_EXAMPLES: &str = r#"Example 1:

["look around", "open door to greenhouse"]

Example 2:

["go door to hallway", "open door to kitchen"]"#;

pub const ACTION_PLAN_SYSTEM: &str = "You are an AI action planner for an autonomous agent. \
You are situated in a task environment, as provide by the user, prior axioms are the fixed \
rules and constraints of the environment, the belief axioms are your beliefs about the \
environment. You need to generate an action plan that will contain a sequence of actions to \
meet the objective of the environment. Do not generate any additional explanations. The \
output should be a list of actions.

Here are some example outputs.

{actionplanexamples}

Here are some historical traces of action and observation:
{envtrace}";

pub const ACTION_PLAN_USER: &str = "Generate the action plan for the following environment. \
If there are ADDITIONAL INSTRUCTIONS, then give MOST IMPORTANCE on the ADDITIONAL \
INSTRUCTIONS to generate the action plan.

Environment:

{environment}

ADDITIONAL INSTRUCTIONS:

{instructions}";

pub const LEARNER_SYSTEM: &str = "You are an expert assistant. You are given ACTION \
OBSERVATION TRACE, a sequence of actions that an agent made in an environment to accomplish \
a task and the perceptions it got.

You need to derive a comprehensive LEARNINGS as BELIEFAXIOMS. Capture all the details in the \
ACTION OBSERVATION TRACE.

You can use the beliefaxioms from a list of related similar problem environments to derive \
the new one.

Generate beliefaxioms, that will help the agent to successfully accomplish the SAME \
objective AGAIN, in the SAME environment.

Each line can ONLY be of the following forms:

X Y Z

where X and Z are entities, subject, object, events from action perception trace and Y are \
relation between X and Z. DO NOT add \"_\" in X, Y or Z. Rigorously capture everything in \
the action observation trace as memory.

Update on top of the current estimated belief axioms of the current environment based on \
the action observation trace. Do not remove the existing beliefs.

Modify or remove the existing beliefs only if it contradicts with ACTION OBSERVATION TRACE. \
You can add your new beliefs to the belief axioms.

The output should always be STRICTLY generated in the following list structure. Each \
element of list will be a text enclosed in DOUBLE QUOTES. add proper escape characters in \
the text if required. DO NOT enclose the list in `` tags.

[<list of learnings. do not write redundant or contradicting statements>]

Here is the environment objective and current belief axioms. You should update and output \
the belief axioms based on the action observation trace provided by the user.

Environment:

{environment}";

pub const LEARNER_USER: &str = "Here is the action observation trace. Provide the belied \
axioms for this. COMBINE MULTIPLE LINES OF BELIEFAXIOMS INTO ONE, WHEREVER POSSIBLE.

Action observation trace:

{envtrace}

Here is the feedback on the overall progress of the agent

{feedback}";

/// Appended to the user prompt when the previous response failed to parse.
pub const FORMAT_REMINDER: &str = "REMINDER: your previous output could not be parsed. \
Output ONLY one list of double quoted action strings, for example [\"action one\", \
\"action two\"]. Do not add any other text.";

/// The `{environment}` block of the action-plan prompt: objective, prior
/// axioms (rules + allowed actions), belief axioms.
pub fn render_environment(ctx: &PromptContext) -> String {
    format!(
        "objective:\n\n{}\n\nprior axioms:\n\n{}\n\nbelief axioms:\n\n{}",
        ctx.objective,
        ctx.prior_axioms,
        ctx.learnings.render()
    )
}

/// The `{instructions}` block: current state text plus the avoid list when
/// there is one.
pub fn render_instructions(ctx: &PromptContext) -> String {
    let mut text = format!(
        "You are at the state:\n\nCurrently you see the following things:\n\n{}\n\nfind rest of the action plan.",
        ctx.current_state_text
    );
    if !ctx.avoided_actions.is_empty() {
        text.push_str(
            "\nYou should STRICTLY AVOID the following IMMEDIATE ACTIONS from the current state.\n\n",
        );
        text.push_str(&ctx.avoided_actions.join("\n"));
    }
    text
}

pub fn render_action_plan_prompt(ctx: &PromptContext) -> (String, String) {
    let system = ACTION_PLAN_SYSTEM
        .replace("{actionplanexamples}", &ctx.plan_examples)
        .replace("{envtrace}", &ctx.trace);
    let user = ACTION_PLAN_USER
        .replace("{environment}", &render_environment(ctx))
        .replace("{instructions}", &render_instructions(ctx));
    (system, user)
}

pub fn render_learner_prompt(
    objective: &str,
    prior: &Learnings,
    trace: &str,
    feedback: &str,
) -> (String, String) {
    let environment = format!(
        "objective:\n\n{}\n\nbelief axioms:\n\n{}",
        objective,
        prior.render()
    );
    let system = LEARNER_SYSTEM.replace("{environment}", &environment);
    let user = LEARNER_USER
        .replace("{envtrace}", trace)
        .replace("{feedback}", feedback);
    (system, user)
}
