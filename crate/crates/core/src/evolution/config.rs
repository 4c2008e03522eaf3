use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::env::{EnvId, EnvironmentSpec};
use crate::generate::text_hash;
use crate::policy::TrainerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Llm,
    Mock,
    Replay,
    L2r,
}

fn default_temperature() -> f64 {
    1.0
}
fn default_timeout() -> u64 {
    120
}
fn default_retries() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_base: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Replay fixture path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    pub request_timeout_s: u64,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    /// For `l2r`: use the chat model to pick template statements instead of
    /// the seeded chooser.
    #[serde(default)]
    pub l2r_use_llm: bool,
}

impl GeneratorConfig {
    pub fn of_kind(kind: GeneratorKind) -> Self {
        Self {
            kind,
            model: None,
            api_base: None,
            api_key_env: None,
            temperature: default_temperature(),
            fixture: None,
            request_timeout_s: default_timeout(),
            max_retries: default_retries(),
            l2r_use_llm: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// One proposal round of `total_samples` samples, no mutation.
    NoEvolution { total_samples: usize },
    /// Feedback carries the task score series only.
    NoReflection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Auto,
    /// Round 0 of every restart trains this program instead of calling the
    /// generator. `None` uses the environment's bundled human reward.
    HumanInit { program: Option<String> },
    /// One sample per round; each round waits for typed feedback.
    HumanFeedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    /// Score candidates by training policies.
    #[default]
    Training,
    /// Score candidates from the replay fixture's recorded scores.
    Scripted,
}

fn d_iterations() -> usize {
    5
}
fn d_samples() -> usize {
    16
}
fn d_restarts() -> usize {
    5
}
fn d_one() -> usize {
    1
}
fn d_final_runs() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    #[serde(default = "d_iterations")]
    pub iterations: usize,
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default = "d_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub ablation: Ablation,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "d_one")]
    pub intermediate_runs: usize,
    #[serde(default = "d_final_runs")]
    pub final_runs: usize,
    #[serde(default)]
    pub evaluator: EvaluatorKind,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            iterations: d_iterations(),
            samples: d_samples(),
            restarts: d_restarts(),
            ablation: Ablation::None,
            mode: Mode::Auto,
            intermediate_runs: 1,
            final_runs: d_final_runs(),
            evaluator: EvaluatorKind::Training,
        }
    }
}

impl EvolutionConfig {
    /// Samples drawn per round.
    pub fn samples_per_round(&self) -> usize {
        match self.ablation {
            Ablation::NoEvolution { total_samples } => total_samples,
            _ => self.samples,
        }
    }
}

/// A complete run description, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: String,
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(env: EnvId, generator: GeneratorConfig) -> Self {
        Self {
            env: env.to_string(),
            generator,
            evolution: EvolutionConfig::default(),
            trainer: TrainerConfig::default(),
            seed: 0,
            out_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| format!("invalid run config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn env_id(&self) -> Result<EnvId, String> {
        self.env.parse().map_err(|e: crate::env::EnvError| e.to_string())
    }

    pub fn spec(&self) -> Result<std::sync::Arc<EnvironmentSpec>, String> {
        Ok(EnvironmentSpec::builtin(self.env_id()?))
    }

    pub fn validate(&self) -> Result<(), String> {
        let spec = self.spec()?;
        let e = &self.evolution;
        if e.iterations == 0 || e.samples_per_round() == 0 || e.restarts == 0 {
            return Err("iterations, samples and restarts must all be at least 1".into());
        }
        if e.intermediate_runs == 0 || e.final_runs == 0 {
            return Err("intermediate_runs and final_runs must be at least 1".into());
        }
        if matches!(e.ablation, Ablation::NoEvolution { .. }) && e.iterations != 1 {
            return Err("the no_evolution ablation runs exactly one iteration; set iterations to 1".into());
        }
        match &e.mode {
            Mode::HumanFeedback => {
                if e.samples != 1 {
                    return Err("human_feedback mode draws one sample per round; set samples to 1".into());
                }
                if e.restarts != 1 {
                    return Err("human_feedback mode runs a single restart".into());
                }
                if e.ablation != Ablation::None {
                    return Err("ablations do not apply to human_feedback mode".into());
                }
            }
            Mode::HumanInit { program } => {
                let text = program.as_deref().unwrap_or(spec.human_reward);
                crate::dsl::parse_program(text, &spec.registry)
                    .map_err(|err| format!("human_init program does not parse: {err}"))?;
            }
            Mode::Auto => {}
        }
        if !(self.generator.temperature.is_finite() && self.generator.temperature >= 0.0) {
            return Err("temperature must be a non-negative number".into());
        }
        match self.generator.kind {
            GeneratorKind::Replay if self.generator.fixture.is_none() => {
                return Err("the replay generator needs a fixture path".into())
            }
            GeneratorKind::Llm if self.generator.model.is_none() || self.generator.api_base.is_none() => {
                return Err("the llm generator needs model and api_base".into())
            }
            _ => {}
        }
        if e.evaluator == EvaluatorKind::Scripted && self.generator.kind != GeneratorKind::Replay {
            return Err("scripted evaluation needs a replay fixture".into());
        }
        self.trainer.validate()
    }

    /// Human-init program text, if that mode is active.
    pub fn human_init_text(&self) -> Option<String> {
        match &self.evolution.mode {
            Mode::HumanInit { program } => Some(match program {
                Some(p) => p.clone(),
                None => self.spec().ok()?.human_reward.to_string(),
            }),
            _ => None,
        }
    }

    /// Deterministic identifier: environment, seed and a config digest.
    pub fn run_id(&self) -> String {
        let mut keyed = self.clone();
        keyed.out_dir = None;
        let json = serde_json::to_string(&keyed).expect("config serializes");
        format!("{}-{}-{:08x}", self.env, self.seed, text_hash(&json) as u32)
    }

    /// Trainer seed shared by every intermediate evaluation in a restart.
    pub fn restart_trainer_seed(&self, restart: usize) -> u64 {
        crate::rng::derive_seed(self.trainer.seed, &[0x7e57, restart as u64])
    }
}

/// Switch a config to human-initialized search, checking the program first.
pub fn apply_human_init(cfg: &RunConfig, human_program: &str) -> Result<RunConfig, String> {
    let spec = cfg.spec()?;
    crate::dsl::parse_program(human_program, &spec.registry).map_err(|e| e.to_string())?;
    let mut out = cfg.clone();
    out.evolution.mode = Mode::HumanInit {
        program: Some(human_program.to_string()),
    };
    Ok(out)
}
