//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every function takes plain strings and numbers and returns a JSON
//! document; failures come back as `{"error": "..."}`.

use rewardsmith_core::dsl::parse_program;
use rewardsmith_core::env::{EnvState, EnvironmentSpec};
use rewardsmith_core::evolution::{
    build_evaluator, build_generator, run_search, GeneratorConfig, GeneratorKind, MemorySink, RunConfig,
};
use rewardsmith_core::policy::{train_policy, TrainerConfig};
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

fn respond(result: Result<Value, String>) -> String {
    result.unwrap_or_else(|e| json!({ "error": e })).to_string()
}

/// Small trainer so a call finishes in well under a second in the browser.
fn demo_trainer(seed: u64, generations: usize) -> TrainerConfig {
    TrainerConfig {
        population: 32,
        generations,
        rollouts_per_candidate: 1,
        checkpoints: generations.clamp(1, 10),
        eval_episodes: 4,
        time_budget_secs: None,
        seed,
        ..TrainerConfig::default()
    }
}

/// Total reward of `program` for a resting point mass placed on a
/// `resolution` x `resolution` grid over [-1.2, 1.2]^2, with the target
/// drawn from `seed`. Rows run along y.
#[wasm_bindgen]
pub fn reward_heatmap(env: &str, program: &str, resolution: usize, seed: u64) -> String {
    respond(heatmap(env, program, resolution, seed))
}

fn heatmap(env: &str, program: &str, resolution: usize, seed: u64) -> Result<Value, String> {
    let spec = EnvironmentSpec::by_name(env).map_err(|e| e.to_string())?;
    if !spec.is_point_mass() {
        return Err(format!("{env} has no planar position to map"));
    }
    if !(2..=200).contains(&resolution) {
        return Err("resolution must lie in [2, 200]".into());
    }
    let program = parse_program(program, &spec.registry).map_err(|e| e.to_string())?;
    let axis: Vec<f64> = (0..resolution)
        .map(|i| -1.2 + 2.4 * i as f64 / (resolution - 1) as f64)
        .collect();
    let mut state = EnvState::new(spec.clone(), seed);
    let mut frame = vec![0.0; spec.registry.frame_width()];
    let mut values = Vec::with_capacity(resolution);
    for &y in &axis {
        let mut row = Vec::with_capacity(resolution);
        for &x in &axis {
            state.set_physical_state(&[x, y, 0.0, 0.0]).map_err(|e| e.to_string())?;
            state.write_frame(&mut frame);
            row.push(program.evaluate_frame(&frame).total);
        }
        values.push(row);
    }
    let target = spec.registry.lookup("target").map(|(o, _)| [frame[o], frame[o + 1]]);
    Ok(json!({ "axis": axis, "target": target, "values": values }))
}

/// Train a policy on `program` and return the task-fitness curve.
#[wasm_bindgen]
pub fn training_curve(env: &str, program: &str, generations: usize, seed: u64) -> String {
    respond(curve(env, program, generations, seed))
}

fn curve(env: &str, program: &str, generations: usize, seed: u64) -> Result<Value, String> {
    let spec = EnvironmentSpec::by_name(env).map_err(|e| e.to_string())?;
    if !(1..=200).contains(&generations) {
        return Err("generations must lie in [1, 200]".into());
    }
    let program = parse_program(program, &spec.registry).map_err(|e| e.to_string())?;
    let cfg = demo_trainer(seed, generations);
    let (_, report) = train_policy(&spec, &program, &cfg).map_err(|e| e.to_string())?;
    let generation: Vec<usize> = report.checkpoint_snapshots.iter().map(|s| s.generation).collect();
    Ok(json!({
        "initial_fitness": report.initial_fitness,
        "final_fitness": report.final_fitness,
        "generation": generation,
        "fitness": report.fitness_series(),
        "episode_length": report.episode_length_series(),
    }))
}

/// Run a small search with the built-in mock generator.
#[wasm_bindgen]
pub fn mock_search(env: &str, iterations: usize, samples: usize, seed: u64) -> String {
    respond(search(env, iterations, samples, seed))
}

fn search(env: &str, iterations: usize, samples: usize, seed: u64) -> Result<Value, String> {
    let id = env.parse().map_err(|e: rewardsmith_core::env::EnvError| e.to_string())?;
    if iterations > 10 || samples > 16 {
        return Err("the demo caps iterations at 10 and samples at 16".into());
    }
    let mut cfg = RunConfig::new(id, GeneratorConfig::of_kind(GeneratorKind::Mock));
    cfg.evolution.iterations = iterations;
    cfg.evolution.samples = samples;
    cfg.evolution.restarts = 1;
    cfg.trainer = demo_trainer(seed, 12);
    cfg.trainer.eval_episodes = 2;
    cfg.seed = seed;
    let mut generator = build_generator(&cfg, None).map_err(|e| e.to_string())?;
    let evaluator = build_evaluator(&cfg).map_err(|e| e.to_string())?;
    let mut sink = MemorySink::default();
    let record = run_search(&cfg, generator.as_mut(), evaluator.as_ref(), &mut sink).map_err(|e| e.to_string())?;
    let best = record.eureka_best.as_ref();
    Ok(json!({
        "best_per_iteration": record.best_per_iteration(),
        "best_so_far": record.best_so_far(0),
        "best_program": best.map(|b| b.program_text.clone()),
        "best_score": best.map(|b| b.score),
        "final_score": record.final_evaluation.as_ref().map(|f| f.mean_of_max),
    }))
}
