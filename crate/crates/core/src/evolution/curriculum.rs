//! Two-stage runs: search a reward on one task, then fine-tune on another.

use serde::{Deserialize, Serialize};

use super::record::RunRecord;
use super::search::{run_search, EventSink, Evaluator, SearchError};
use super::config::RunConfig;
use crate::dsl::parse_program;
use crate::env::EnvId;
use crate::generate::Generator;
use crate::policy::{train_policy, train_policy_from, TrainerConfig};

/// Stage-B outcome for one trainer seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageBSeed {
    pub seed: u64,
    /// Warm-started from the stage-A policy.
    pub fine_tuned: f64,
    pub scratch: f64,
    /// The stage-A policy evaluated on stage B before any fine-tuning.
    pub pretrained: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumResult {
    pub stage_a: RunRecord,
    pub stage_b_env: EnvId,
    /// Stage-A best program, used verbatim in stage B.
    pub program_text: String,
    pub seeds: Vec<StageBSeed>,
}

impl CurriculumResult {
    pub fn mean_fine_tuned(&self) -> f64 {
        self.seeds.iter().map(|s| s.fine_tuned).sum::<f64>() / self.seeds.len() as f64
    }

    pub fn mean_scratch(&self) -> f64 {
        self.seeds.iter().map(|s| s.scratch).sum::<f64>() / self.seeds.len() as f64
    }
}

/// Stage A is a full search under `stage_a`. Stage B trains on `stage_b_env`
/// with the stage-A best program, once from the stage-A policy and once from
/// scratch, for each seed.
pub fn run_curriculum(
    stage_a: &RunConfig,
    generator: &mut dyn Generator,
    evaluator: &dyn Evaluator,
    sink: &mut dyn EventSink,
    stage_b_env: EnvId,
    stage_b_trainer: &TrainerConfig,
    seeds: &[u64],
) -> Result<CurriculumResult, SearchError> {
    let spec_a = stage_a.spec().map_err(SearchError::Config)?;
    let spec_b = crate::env::EnvironmentSpec::builtin(stage_b_env);
    if !spec_a.registry.is_compatible_with(&spec_b.registry) || spec_a.action_dim != spec_b.action_dim {
        return Err(SearchError::Config(format!(
            "{} and {} do not share a variable registry",
            spec_a.id, spec_b.id
        )));
    }
    if seeds.is_empty() {
        return Err(SearchError::Config("stage B needs at least one seed".into()));
    }
    stage_b_trainer.validate().map_err(SearchError::Config)?;
    let record = run_search(stage_a, generator, evaluator, sink)?;
    let best = record
        .eureka_best
        .clone()
        .ok_or_else(|| SearchError::Config("stage A produced no scored program".into()))?;
    let fail = |e: crate::policy::TrainingFailure| SearchError::Config(e.to_string());
    let program_a = parse_program(&best.program_text, &spec_a.registry).map_err(|e| SearchError::Config(e.to_string()))?;
    let (policy, _) = train_policy(&spec_a, &program_a, &stage_a.trainer).map_err(fail)?;
    let program_b = parse_program(&best.program_text, &spec_b.registry).map_err(|e| SearchError::Config(e.to_string()))?;
    let seeds = seeds
        .iter()
        .map(|&seed| {
            let cfg = stage_b_trainer.with_seed(seed);
            let (_, tuned) = train_policy_from(&spec_b, &program_b, &cfg, Some(&policy))?;
            let (_, scratch) = train_policy(&spec_b, &program_b, &cfg)?;
            Ok(StageBSeed {
                seed,
                fine_tuned: tuned.final_fitness,
                scratch: scratch.final_fitness,
                pretrained: tuned.initial_fitness,
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(fail)?;
    Ok(CurriculumResult {
        stage_a: record,
        stage_b_env,
        program_text: best.program_text,
        seeds,
    })
}
