//! Text feedback built from training statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{ParseError, RewardProgram};
use crate::policy::{TrainingFailure, TrainingReport};

pub const TASK_SCORE: &str = "task_score";
pub const EPISODE_LENGTH: &str = "episode_length";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardReflection {
    pub text: String,
    /// Per-component series, in program order.
    pub per_component_series: Vec<(String, Vec<f64>)>,
    pub fitness_series: Vec<f64>,
    pub episode_length_series: Vec<f64>,
    pub verdict_note: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReflectionError {
    #[error("training report has no series for component `{0}`")]
    MissingComponent(String),
    #[error("training report has a series for `{0}`, which is not a program component")]
    ExtraComponent(String),
}

/// Why a candidate produced no usable training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CandidateFailure {
    Parse { message: String },
    Training(TrainingFailure),
    /// Training was stopped by the time budget; the score is still valid.
    TimedOut { score: f64 },
}

impl From<&ParseError> for CandidateFailure {
    fn from(e: &ParseError) -> Self {
        CandidateFailure::Parse { message: e.to_string() }
    }
}

impl From<TrainingFailure> for CandidateFailure {
    fn from(e: TrainingFailure) -> Self {
        CandidateFailure::Training(e)
    }
}

/// Four significant digits, trailing zeros kept.
pub fn format_sig4(x: f64) -> String {
    if x == 0.0 {
        return "0.000".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.3e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..].parse().expect("integer exponent");
    if (-4..4).contains(&exp) {
        format!("{:.*}", (3 - exp) as usize, x)
    } else {
        sci
    }
}

fn render_series(out: &mut String, name: &str, series: &[f64]) {
    let values: Vec<String> = series.iter().map(|v| format_sig4(*v)).collect();
    let _ = write!(out, "{name}: [{}]", values.join(", "));
    if !series.is_empty() {
        let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = series.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = series.iter().sum::<f64>() / series.len() as f64;
        let _ = write!(
            out,
            " max={} mean={} min={}",
            format_sig4(max),
            format_sig4(mean),
            format_sig4(min)
        );
    }
    out.push('\n');
}

fn header(report: &TrainingReport) -> String {
    format!(
        "Policy feedback from training with this reward, at {} evenly spaced checkpoints:\n",
        report.checkpoint_snapshots.len()
    )
}

/// Full reflection: one series per component, then task score and episode length.
pub fn build_reflection(report: &TrainingReport, program: &RewardProgram) -> Result<RewardReflection, ReflectionError> {
    let names = program.component_names();
    if let Some(first) = report.checkpoint_snapshots.first() {
        if let Some(extra) = first.component_means.keys().find(|k| !names.contains(&k.as_str())) {
            return Err(ReflectionError::ExtraComponent(extra.clone()));
        }
    }
    let mut per_component_series = Vec::with_capacity(names.len());
    for name in &names {
        let series = report
            .component_series(name)
            .ok_or_else(|| ReflectionError::MissingComponent(name.to_string()))?;
        per_component_series.push((name.to_string(), series));
    }
    let fitness_series = report.fitness_series();
    let episode_length_series = report.episode_length_series();
    let mut text = header(report);
    for (name, series) in &per_component_series {
        render_series(&mut text, name, series);
    }
    render_series(&mut text, TASK_SCORE, &fitness_series);
    render_series(&mut text, EPISODE_LENGTH, &episode_length_series);
    let verdict_note = if report.timed_out {
        "Training reached the time budget before the last generation; late checkpoints reuse the last policy."
            .to_string()
    } else {
        String::new()
    };
    if !verdict_note.is_empty() {
        text.push_str(&verdict_note);
        text.push('\n');
    }
    Ok(RewardReflection {
        text,
        per_component_series,
        fitness_series,
        episode_length_series,
        verdict_note,
    })
}

/// Feedback carrying only the task score series.
pub fn build_fitness_only_feedback(report: &TrainingReport) -> String {
    let mut text = header(report);
    render_series(&mut text, TASK_SCORE, &report.fitness_series());
    text
}

/// Feedback for a candidate that failed to parse, train, or finish in time.
pub fn build_failure_feedback(failure: &CandidateFailure) -> String {
    match failure {
        CandidateFailure::Parse { message } => format!(
            "The reward program could not be parsed: {message}\n\
             Fix this error and write the complete program again, one `name = expression` line per component.\n"
        ),
        CandidateFailure::Training(e) => format!(
            "Training with the reward program failed: {e}\n\
             Fix the program so that it can be evaluated at every step, and write it out in full.\n"
        ),
        CandidateFailure::TimedOut { score } => format!(
            "Training with the reward program was too slow and was stopped at the time budget, so the program \
             is treated as slow or degenerate. Its task_score from the finished checkpoints, {}, is kept.\n\
             Write a simpler program.\n",
            format_sig4(*score)
        ),
    }
}

/// Series lookup by name, for callers holding a reflection.
pub fn series_map(r: &RewardReflection) -> BTreeMap<&str, &[f64]> {
    let mut m: BTreeMap<&str, &[f64]> = r.per_component_series.iter().map(|(k, v)| (k.as_str(), v.as_slice())).collect();
    m.insert(TASK_SCORE, &r.fitness_series);
    m.insert(EPISODE_LENGTH, &r.episode_length_series);
    m
}
