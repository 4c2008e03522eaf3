use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::GeneratorContext;

pub const SYSTEM_PROMPT: &str = "\
You are a reward engineer. You write reward programs that let a reinforcement learning agent learn \
the task described by the user as well as possible. A reward program is evaluated after every \
environment step on the variables listed by the user, and the agent is trained to maximize the sum \
of its values over an episode.

Reward programs are written in a small expression language:
- one component per line, written `name = expression`; the reward is the sum of all components
- names start with a letter and contain letters, digits and underscores
- numbers, the listed variables, + - * /, unary minus and parentheses
- abs(x), exp(x), tanh(x), square(x), sqrt(x), min(a, b), max(a, b), pow(x, k) with k an integer from 0 to 6
- norm2(v) and dot(u, v) for vectors, v[i] for the i-th entry (from 0)
- lt(a, b), le(a, b), gt(a, b), ge(a, b) give 1 when the comparison holds and 0 otherwise
- clamp(x, lo, hi)
- `#` starts a comment
Division by values near zero and square roots of negative values are guarded, so every program is safe to run.
";

pub const FORMATTING_TIP: &str = "\
Write the complete reward program inside a single fenced code block. Use only the listed variables. \
Give every component a descriptive name, and put any weight or temperature inside that component's \
expression, for example `dist_r = -2.0 * dist` or `near_r = exp(-dist / 0.1)`.
";

const FEEDBACK_TIP: &str = "\
Study the feedback and write a new reward program that improves on this one. When doing so:
- if task_score stays flat or near its lowest value, write a substantially different program
- if a component barely changes across checkpoints, rescale it, change its form, or drop it
- if one component is far larger in magnitude than the others, rescale it
";

/// The three parts of a generator prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub formatting_tip: String,
}

impl PromptBundle {
    /// The user message with the formatting tip appended, as sent to a chat model.
    pub fn user_message(&self) -> String {
        format!("{}\n{}", self.user, self.formatting_tip)
    }

    /// The part of the user text after the prior program, if any.
    pub fn feedback_section(&self) -> Option<&str> {
        self.user.find(FEEDBACK_HEADING).map(|i| &self.user[i..])
    }
}

const PRIOR_HEADING: &str = "Best reward program from the previous round:";
const FEEDBACK_HEADING: &str = "Feedback on that program:";

/// Build the prompt for one proposal round. Only the previous round's best
/// program and its feedback are carried; nothing older is included.
pub fn assemble_prompt(ctx: &GeneratorContext) -> PromptBundle {
    let mut user = String::new();
    user.push_str(&ctx.env_context);
    user.push_str(&format!("\nTask description: {}\n", ctx.task_description));
    if let Some(instruction) = &ctx.instruction {
        user.push_str(&format!("\nGuidance from the user:\n{instruction}\n"));
    }
    match &ctx.prior {
        None => user.push_str("\nWrite a reward program for this task.\n"),
        Some(prior) => {
            user.push_str(&format!("\n{PRIOR_HEADING}\n```\n{}```\n", ensure_newline(&prior.program_text)));
            user.push_str(&format!("\n{FEEDBACK_HEADING}\n{}\n", ensure_newline(&prior.feedback)));
            user.push_str(FEEDBACK_TIP);
        }
    }
    PromptBundle {
        system: SYSTEM_PROMPT.to_string(),
        user,
        formatting_tip: FORMATTING_TIP.to_string(),
    }
}

fn ensure_newline(s: &str) -> String {
    if s.ends_with('\n') {
        s.to_string()
    } else {
        format!("{s}\n")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractError {
    #[error("response is empty")]
    Empty,
    #[error("no reward program found in the response")]
    NoProgram,
}

/// Pull program text out of a chat response: the first fenced code block,
/// or failing that every line shaped like `name = expression`.
pub fn extract_program_text(response: &str) -> Result<String, ExtractError> {
    if response.trim().is_empty() {
        return Err(ExtractError::Empty);
    }
    let lines: Vec<&str> = response.lines().collect();
    if let Some(open) = lines.iter().position(|l| l.trim_start().starts_with("```")) {
        let body: Vec<&str> = lines[open + 1..]
            .iter()
            .take_while(|l| !l.trim_start().starts_with("```"))
            .copied()
            .collect();
        let text = body.join("\n");
        if !text.trim().is_empty() {
            return Ok(text.trim_end().to_string());
        }
    }
    let assignments: Vec<&str> = lines.iter().copied().filter(|l| is_assignment(l)).collect();
    if assignments.is_empty() {
        Err(ExtractError::NoProgram)
    } else {
        Ok(assignments.join("\n"))
    }
}

fn is_assignment(line: &str) -> bool {
    let line = line.trim();
    let Some((lhs, rhs)) = line.split_once('=') else {
        return false;
    };
    let lhs = lhs.trim();
    let mut chars = lhs.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !rhs.starts_with('=')
        && !rhs.trim().is_empty()
}
