//! Candidate proposers and prompt assembly.
//!
//! Every generator answers the same request: given the environment context
//! and, after the first round, the previous best program with its feedback,
//! return `k` raw program texts. Parsing happens here, so a generator never
//! hides a malformed sample.

pub mod l2r;
pub mod llm;
pub mod mock;
mod prompt;
pub mod replay;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{parse_program, ParseError, RewardProgram, VarRegistry};
use crate::env::{render_context, EnvId, EnvironmentSpec};

pub use prompt::{assemble_prompt, extract_program_text, ExtractError, PromptBundle, FORMATTING_TIP, SYSTEM_PROMPT};

/// The program carried into the next round, with its feedback text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub program_text: String,
    pub feedback: String,
}

#[derive(Debug, Clone)]
pub struct GeneratorContext {
    pub env_id: EnvId,
    pub registry: Arc<VarRegistry>,
    pub env_context: String,
    pub task_description: String,
    pub prior: Option<Prior>,
    pub iteration: usize,
    pub restart: usize,
    /// Free-text guidance shown in a first-round prompt.
    pub instruction: Option<String>,
}

impl GeneratorContext {
    pub fn initial(spec: &EnvironmentSpec, restart: usize) -> Self {
        Self {
            env_id: spec.id,
            registry: Arc::clone(&spec.registry),
            env_context: render_context(spec),
            task_description: spec.task_description.clone(),
            prior: None,
            iteration: 0,
            restart,
            instruction: None,
        }
    }

    pub fn next(&self, prior: Prior) -> Self {
        Self {
            prior: Some(prior),
            iteration: self.iteration + 1,
            instruction: None,
            ..self.clone()
        }
    }
}

/// One sample from a generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub raw_text: String,
    pub result: Result<RewardProgram, ParseError>,
}

impl Proposal {
    /// Extract and parse a raw generator response.
    pub fn from_raw(raw_text: String, registry: &Arc<VarRegistry>) -> Self {
        let result = match extract_program_text(&raw_text) {
            Ok(text) => parse_program(&text, registry),
            Err(e) => Err(ParseError {
                line: 0,
                column: 0,
                message: e.to_string(),
            }),
        };
        Self { raw_text, result }
    }

    pub fn program(&self) -> Option<&RewardProgram> {
        self.result.as_ref().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("generator transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("replay fixture exhausted: {requested} sample(s) requested, {remaining} left")]
    FixtureExhausted { requested: usize, remaining: usize },
    #[error("{0}")]
    Invalid(String),
}

/// A proposal request: the context, the prompt built from it, and sampling
/// settings.
#[derive(Debug, Clone)]
pub struct ProposalRequest<'a> {
    pub ctx: &'a GeneratorContext,
    pub prompt: &'a PromptBundle,
    pub k: usize,
    pub temperature: f64,
}

pub trait Generator: Send {
    fn kind(&self) -> &'static str;

    /// Return exactly `request.k` raw samples, in sample order.
    fn propose_raw(&mut self, request: &ProposalRequest<'_>) -> Result<Vec<String>, GeneratorError>;

    /// Whether the same request always yields the same samples.
    fn is_deterministic(&self) -> bool;

    /// Account for `n` samples already recorded by an earlier process.
    fn skip(&mut self, _n: usize) {}
}

/// Draw `k` samples and parse each of them. Failed parses stay in the batch.
pub fn propose(
    generator: &mut dyn Generator,
    ctx: &GeneratorContext,
    k: usize,
    temperature: f64,
) -> Result<Vec<Proposal>, GeneratorError> {
    let prompt = assemble_prompt(ctx);
    propose_with_prompt(generator, ctx, &prompt, k, temperature)
}

pub fn propose_with_prompt(
    generator: &mut dyn Generator,
    ctx: &GeneratorContext,
    prompt: &PromptBundle,
    k: usize,
    temperature: f64,
) -> Result<Vec<Proposal>, GeneratorError> {
    if k == 0 {
        return Err(GeneratorError::Invalid("k must be at least 1".into()));
    }
    let raw = generator.propose_raw(&ProposalRequest {
        ctx,
        prompt,
        k,
        temperature,
    })?;
    if raw.len() != k {
        return Err(GeneratorError::Invalid(format!(
            "{} returned {} sample(s), expected {k}",
            generator.kind(),
            raw.len()
        )));
    }
    Ok(raw.into_iter().map(|r| Proposal::from_raw(r, &ctx.registry)).collect())
}

/// Stable 64-bit FNV-1a hash, used to key seeded generators on text.
pub fn text_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
