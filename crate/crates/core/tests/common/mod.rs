#![allow(dead_code)]

use std::path::PathBuf;

use rewardsmith_core::env::EnvId;
use rewardsmith_core::evolution::{EvaluatorKind, GeneratorConfig, GeneratorKind, RunConfig};
use rewardsmith_core::policy::TrainerConfig;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// A trainer small enough for many candidates per test.
pub fn tiny_trainer() -> TrainerConfig {
    TrainerConfig {
        population: 16,
        elite_fraction: 0.125,
        generations: 4,
        rollouts_per_candidate: 1,
        checkpoints: 2,
        eval_episodes: 2,
        time_budget_secs: None,
        ..TrainerConfig::default()
    }
}

/// The bundled two-round replay trace, scored from the fixture.
pub fn replay_trace_config() -> RunConfig {
    let mut generator = GeneratorConfig::of_kind(GeneratorKind::Replay);
    generator.fixture = Some(fixture_path("replay_trace.json"));
    let mut cfg = RunConfig::new(EnvId::PointmassReach, generator);
    cfg.evolution.iterations = 2;
    cfg.evolution.samples = 3;
    cfg.evolution.restarts = 1;
    cfg.evolution.evaluator = EvaluatorKind::Scripted;
    cfg
}

pub fn mock_config(env: EnvId, iterations: usize, samples: usize, restarts: usize) -> RunConfig {
    let mut cfg = RunConfig::new(env, GeneratorConfig::of_kind(GeneratorKind::Mock));
    cfg.evolution.iterations = iterations;
    cfg.evolution.samples = samples;
    cfg.evolution.restarts = restarts;
    cfg.trainer = tiny_trainer();
    cfg.seed = 7;
    cfg
}
