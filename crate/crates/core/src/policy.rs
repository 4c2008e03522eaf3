//! Cross-entropy-method training of linear-tanh policies.
//!
//! A training run is scored by the environment's task fitness, but elites
//! are chosen by the candidate reward program. This is the only place
//! where a reward program influences behaviour.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::RewardProgram;
use crate::env::{EnvState, EnvironmentSpec, FitnessTracker, FrameTransition};
use crate::rng::{self, derive_seed};

/// `action = tanh(weights · observation + bias)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub action_dim: usize,
    pub observation_dim: usize,
    /// Row-major `action_dim × observation_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Policy {
    pub fn zeros(action_dim: usize, observation_dim: usize) -> Self {
        Self {
            action_dim,
            observation_dim,
            weights: vec![0.0; action_dim * observation_dim],
            bias: vec![0.0; action_dim],
        }
    }

    pub fn parameter_count(action_dim: usize, observation_dim: usize) -> usize {
        action_dim * (observation_dim + 1)
    }

    /// Parameters laid out as weights followed by bias.
    pub fn from_params(action_dim: usize, observation_dim: usize, params: &[f64]) -> Self {
        let split = action_dim * observation_dim;
        assert_eq!(params.len(), split + action_dim, "parameter vector has the wrong length");
        Self {
            action_dim,
            observation_dim,
            weights: params[..split].to_vec(),
            bias: params[split..].to_vec(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    pub fn act(&self, observation: &[f64], action: &mut [f64]) {
        for (i, a) in action.iter_mut().enumerate() {
            let row = &self.weights[i * self.observation_dim..(i + 1) * self.observation_dim];
            let z: f64 = row.iter().zip(observation).map(|(w, o)| w * o).sum::<f64>() + self.bias[i];
            *a = z.tanh();
        }
    }
}

/// Diagonal-Gaussian cross-entropy method, maximizing.
#[derive(Debug, Clone)]
pub struct Cem {
    mean: Vec<f64>,
    std: Vec<f64>,
    population: usize,
    elite_count: usize,
    noise_floor: f64,
}

impl Cem {
    pub fn new(mean: Vec<f64>, init_std: f64, population: usize, elite_fraction: f64, noise_floor: f64) -> Self {
        let elite_count = ((population as f64 * elite_fraction).round() as usize).clamp(1, population);
        Self {
            std: vec![init_std.max(noise_floor); mean.len()],
            mean,
            population,
            elite_count,
            noise_floor,
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn elite_count(&self) -> usize {
        self.elite_count
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        (0..self.population)
            .map(|_| {
                self.mean
                    .iter()
                    .zip(&self.std)
                    .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect()
    }

    /// Indices of the elites, best first. Ties keep the lower index.
    pub fn elites(&self, scores: &[f64]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order.truncate(self.elite_count);
        order
    }

    /// Refit the sampling distribution to the elites of `samples`.
    pub fn update(&mut self, samples: &[Vec<f64>], scores: &[f64]) {
        assert_eq!(samples.len(), scores.len());
        let elites = self.elites(scores);
        let n = elites.len() as f64;
        for d in 0..self.mean.len() {
            let mean = elites.iter().map(|&i| samples[i][d]).sum::<f64>() / n;
            let var = elites.iter().map(|&i| (samples[i][d] - mean).powi(2)).sum::<f64>() / n;
            self.mean[d] = mean;
            self.std[d] = var.sqrt().max(self.noise_floor);
        }
    }
}

fn default_init_std() -> f64 {
    1.0
}
fn default_eval_episodes() -> usize {
    4
}
fn default_transition_cap() -> usize {
    5000
}
fn default_time_budget() -> Option<f64> {
    Some(30.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub population: usize,
    pub elite_fraction: f64,
    pub generations: usize,
    pub rollouts_per_candidate: usize,
    pub checkpoints: usize,
    pub noise_floor: f64,
    pub seed: u64,
    /// Initial sampling standard deviation.
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    /// Episodes used to measure task fitness at each checkpoint.
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_transition_cap")]
    pub transition_cap: usize,
    /// Wall-clock limit per training call; `None` disables it.
    #[serde(default = "default_time_budget")]
    pub time_budget_secs: Option<f64>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            population: 64,
            elite_fraction: 0.125,
            generations: 40,
            rollouts_per_candidate: 2,
            checkpoints: 10,
            noise_floor: 0.01,
            seed: 0,
            init_std: default_init_std(),
            eval_episodes: default_eval_episodes(),
            transition_cap: default_transition_cap(),
            time_budget_secs: default_time_budget(),
        }
    }
}

impl TrainerConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.population == 0 {
            return Err("population must be at least 1".into());
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 0.5) {
            return Err(format!("elite_fraction must lie in (0, 0.5], got {}", self.elite_fraction));
        }
        if self.checkpoints > self.generations {
            return Err(format!(
                "checkpoints ({}) cannot exceed generations ({})",
                self.checkpoints, self.generations
            ));
        }
        if self.generations > 0 && self.checkpoints == 0 {
            return Err("at least one checkpoint is required".into());
        }
        if self.rollouts_per_candidate == 0 || self.eval_episodes == 0 {
            return Err("rollouts_per_candidate and eval_episodes must be at least 1".into());
        }
        if !(self.noise_floor >= 0.0 && self.init_std > 0.0) {
            return Err("noise_floor must be non-negative and init_std positive".into());
        }
        Ok(())
    }

    /// Generation counts after which snapshots are taken.
    pub fn checkpoint_generations(&self) -> Vec<usize> {
        (1..=self.checkpoints)
            .map(|j| ((j * self.generations) as f64 / self.checkpoints as f64).round() as usize)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Number of completed generations.
    pub generation: usize,
    /// Mean task fitness of the sampling-mean policy.
    pub fitness: f64,
    /// Mean per-episode sum of each reward component.
    pub component_means: BTreeMap<String, f64>,
    pub episode_length_mean: f64,
    pub reward_mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingReport {
    pub checkpoint_snapshots: Vec<Snapshot>,
    /// Task fitness of the initial policy.
    pub initial_fitness: f64,
    /// Best checkpoint fitness (the initial fitness when there are no checkpoints).
    pub final_fitness: f64,
    pub transitions_sample: Vec<FrameTransition>,
    pub timed_out: bool,
    #[serde(default)]
    pub wall_time_secs: f64,
}

impl PartialEq for TrainingReport {
    fn eq(&self, other: &Self) -> bool {
        self.checkpoint_snapshots == other.checkpoint_snapshots
            && self.initial_fitness.to_bits() == other.initial_fitness.to_bits()
            && self.final_fitness.to_bits() == other.final_fitness.to_bits()
            && self.transitions_sample == other.transitions_sample
            && self.timed_out == other.timed_out
    }
}

impl TrainingReport {
    pub fn fitness_series(&self) -> Vec<f64> {
        self.checkpoint_snapshots.iter().map(|s| s.fitness).collect()
    }

    pub fn component_series(&self, name: &str) -> Option<Vec<f64>> {
        self.checkpoint_snapshots
            .iter()
            .map(|s| s.component_means.get(name).copied())
            .collect()
    }

    pub fn episode_length_series(&self) -> Vec<f64> {
        self.checkpoint_snapshots.iter().map(|s| s.episode_length_mean).collect()
    }

    /// Fitness of the last checkpoint.
    pub fn last_fitness(&self) -> f64 {
        self.checkpoint_snapshots.last().map_or(self.initial_fitness, |s| s.fitness)
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("training failed at step {step}: {message}")]
pub struct TrainingFailure {
    pub step: usize,
    pub message: String,
}

impl TrainingFailure {
    fn setup(message: impl Into<String>) -> Self {
        Self {
            step: 0,
            message: message.into(),
        }
    }
}

/// Optional initial sampling mean (warm start).
pub type WarmStart<'a> = Option<&'a Policy>;

// Stream tags for the trainer's random number streams.
const TAG_SAMPLE: u64 = 1;
const TAG_ROLLOUT: u64 = 2;
const TAG_EVAL: u64 = 3;
const TAG_RESERVOIR: u64 = 4;

struct Reservoir {
    cap: usize,
    seen: u64,
    items: Vec<FrameTransition>,
    rng: rng::StreamRng,
}

impl Reservoir {
    /// Slot for the next offered item, if it is kept.
    fn slot(&mut self) -> Option<usize> {
        self.seen += 1;
        if self.cap == 0 {
            return None;
        }
        if self.items.len() < self.cap {
            return Some(self.items.len());
        }
        let j = self.rng.random_range(0..self.seen);
        (j < self.cap as u64).then_some(j as usize)
    }
}

struct EpisodeStats {
    reward: f64,
    fitness: f64,
    length: usize,
}

/// Run one episode. `components` accumulates per-component sums when given.
fn run_episode(
    spec: &Arc<EnvironmentSpec>,
    program: &RewardProgram,
    policy: &Policy,
    env_seed: u64,
    mut components: Option<&mut [f64]>,
    mut reservoir: Option<&mut Reservoir>,
) -> EpisodeStats {
    let mut state = EnvState::new(Arc::clone(spec), env_seed);
    let width = spec.registry.frame_width();
    let mut before = vec![0.0; width];
    let mut after = vec![0.0; width];
    let mut obs = vec![0.0; spec.observation_dim];
    let mut action = vec![0.0; spec.action_dim];
    let mut values = vec![0.0; program.len()];
    let mut tracker = FitnessTracker::new(spec.fitness_kind);
    let mut reward = 0.0;
    state.write_frame(&mut before);
    while !state.is_done() {
        state.observe(&mut obs);
        policy.act(&obs, &mut action);
        let info = state.advance(&action).expect("policy actions are finite and well-shaped");
        state.write_frame(&mut after);
        reward += program.evaluate_into(&after, &mut values);
        if let Some(acc) = components.as_deref_mut() {
            for (a, v) in acc.iter_mut().zip(&values) {
                *a += v;
            }
        }
        tracker.record(info.dist, info.failed, info.event);
        if let Some(res) = reservoir.as_deref_mut() {
            if let Some(slot) = res.slot() {
                let t = FrameTransition {
                    before: before.clone(),
                    action: action.clone(),
                    after: after.clone(),
                    terminated: info.terminated,
                    failed: info.failed,
                    event: info.event,
                    fitness_increment: FitnessTracker::increment(spec.fitness_kind, info.dist, info.failed, info.event),
                };
                if slot == res.items.len() {
                    res.items.push(t);
                } else {
                    res.items[slot] = t;
                }
            }
        }
        std::mem::swap(&mut before, &mut after);
    }
    EpisodeStats {
        reward,
        fitness: tracker.value(),
        length: tracker.steps(),
    }
}

fn evaluate_snapshot(
    spec: &Arc<EnvironmentSpec>,
    program: &RewardProgram,
    policy: &Policy,
    cfg: &TrainerConfig,
    generation: usize,
) -> Snapshot {
    let mut sums = vec![0.0; program.len()];
    let (mut fitness, mut length, mut reward) = (0.0, 0.0, 0.0);
    for e in 0..cfg.eval_episodes {
        let stats = run_episode(
            spec,
            program,
            policy,
            derive_seed(cfg.seed, &[TAG_EVAL, e as u64]),
            Some(&mut sums),
            None,
        );
        fitness += stats.fitness;
        length += stats.length as f64;
        reward += stats.reward;
    }
    let n = cfg.eval_episodes as f64;
    Snapshot {
        generation,
        fitness: fitness / n,
        component_means: program
            .component_names()
            .into_iter()
            .zip(&sums)
            .map(|(name, s)| (name.to_string(), s / n))
            .collect(),
        episode_length_mean: length / n,
        reward_mean: reward / n,
    }
}

/// Mean task fitness of a fixed policy over the checkpoint evaluation episodes.
pub fn evaluate_policy(spec: &Arc<EnvironmentSpec>, program: &RewardProgram, policy: &Policy, cfg: &TrainerConfig) -> f64 {
    evaluate_snapshot(spec, program, policy, cfg, 0).fitness
}

/// Train a policy for `program` and report checkpointed statistics.
///
/// The returned policy is the sampling mean at the best checkpoint.
pub fn train_policy(
    spec: &Arc<EnvironmentSpec>,
    program: &RewardProgram,
    cfg: &TrainerConfig,
) -> Result<(Policy, TrainingReport), TrainingFailure> {
    train_policy_from(spec, program, cfg, None)
}

/// As [`train_policy`], starting the search distribution at `warm_start`.
pub fn train_policy_from(
    spec: &Arc<EnvironmentSpec>,
    program: &RewardProgram,
    cfg: &TrainerConfig,
    warm_start: WarmStart<'_>,
) -> Result<(Policy, TrainingReport), TrainingFailure> {
    cfg.validate().map_err(TrainingFailure::setup)?;
    if !program.registry().is_compatible_with(&spec.registry) {
        return Err(TrainingFailure::setup(format!(
            "reward program was not built for the {} variable registry",
            spec.id
        )));
    }
    let clock = Clock::start();
    let (adim, odim) = (spec.action_dim, spec.observation_dim);
    let init = match warm_start {
        Some(p) => {
            if (p.action_dim, p.observation_dim) != (adim, odim) {
                return Err(TrainingFailure::setup("warm-start policy has the wrong shape"));
            }
            p.params()
        }
        None => vec![0.0; Policy::parameter_count(adim, odim)],
    };
    let mut cem = Cem::new(init, cfg.init_std, cfg.population, cfg.elite_fraction, cfg.noise_floor);
    let mut reservoir = Reservoir {
        cap: cfg.transition_cap,
        seen: 0,
        items: Vec::new(),
        rng: rng::stream(cfg.seed, &[TAG_RESERVOIR]),
    };
    let initial_policy = Policy::from_params(adim, odim, cem.mean());
    let initial_fitness = evaluate_policy(spec, program, &initial_policy, cfg);
    let mut best = (initial_fitness, initial_policy);
    let mut snapshots = Vec::with_capacity(cfg.checkpoints);
    let marks = cfg.checkpoint_generations();
    let mut timed_out = false;
    for generation in 1..=cfg.generations {
        if !timed_out {
            let mut rng = rng::stream(cfg.seed, &[TAG_SAMPLE, generation as u64]);
            let samples = cem.sample(&mut rng);
            let scores: Vec<f64> = samples
                .iter()
                .map(|params| {
                    let policy = Policy::from_params(adim, odim, params);
                    (0..cfg.rollouts_per_candidate)
                        .map(|r| {
                            let env_seed = derive_seed(cfg.seed, &[TAG_ROLLOUT, generation as u64, r as u64]);
                            run_episode(spec, program, &policy, env_seed, None, Some(&mut reservoir)).reward
                        })
                        .sum::<f64>()
                        / cfg.rollouts_per_candidate as f64
                })
                .collect();
            cem.update(&samples, &scores);
            if clock.exceeded(cfg.time_budget_secs) {
                timed_out = true;
            }
        }
        if marks.contains(&generation) {
            let policy = Policy::from_params(adim, odim, cem.mean());
            let snap = evaluate_snapshot(spec, program, &policy, cfg, generation);
            // ties keep the earlier checkpoint
            if snapshots.is_empty() || snap.fitness > best.0 {
                best = (snap.fitness, policy);
            }
            snapshots.push(snap);
        }
    }
    let final_fitness = if snapshots.is_empty() {
        initial_fitness
    } else {
        snapshots.iter().map(|s| s.fitness).fold(f64::NEG_INFINITY, f64::max)
    };
    let report = TrainingReport {
        checkpoint_snapshots: snapshots,
        initial_fitness,
        final_fitness,
        transitions_sample: reservoir.items,
        timed_out,
        wall_time_secs: clock.elapsed(),
    };
    Ok((best.1, report))
}

/// Both readings of "final score" over several independent training runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalEvaluation {
    /// Per-run best-checkpoint fitness.
    pub run_fitness: Vec<f64>,
    /// Mean over runs of each run's best checkpoint.
    pub mean_of_max: f64,
    /// Best checkpoint of the run-averaged fitness curve.
    pub max_of_mean: f64,
}

/// Train `runs` times with seeds `cfg.seed .. cfg.seed + runs` and return the
/// mean of the per-run final fitness.
pub fn evaluate_policy_final(
    spec: &Arc<EnvironmentSpec>,
    program: &RewardProgram,
    cfg: &TrainerConfig,
    runs: usize,
) -> Result<f64, TrainingFailure> {
    Ok(evaluate_policy_final_detailed(spec, program, cfg, runs)?.mean_of_max)
}

pub fn evaluate_policy_final_detailed(
    spec: &Arc<EnvironmentSpec>,
    program: &RewardProgram,
    cfg: &TrainerConfig,
    runs: usize,
) -> Result<FinalEvaluation, TrainingFailure> {
    if runs == 0 {
        return Err(TrainingFailure::setup("at least one run is required"));
    }
    let seeds: Vec<u64> = (0..runs as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let reports = map_maybe_parallel(&seeds, |&s| train_policy(spec, program, &cfg.with_seed(s)).map(|r| r.1))?;
    let run_fitness: Vec<f64> = reports.iter().map(|r| r.final_fitness).collect();
    let mean_of_max = run_fitness.iter().sum::<f64>() / runs as f64;
    let curves: Vec<Vec<f64>> = reports.iter().map(TrainingReport::fitness_series).collect();
    let max_of_mean = if curves[0].is_empty() {
        mean_of_max
    } else {
        (0..curves[0].len())
            .map(|j| curves.iter().map(|c| c[j]).sum::<f64>() / runs as f64)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    Ok(FinalEvaluation {
        run_fitness,
        mean_of_max,
        max_of_mean,
    })
}

/// Apply `f` to every item, in parallel when the `parallel` feature is on.
/// Results keep input order; the first error wins.
pub(crate) fn map_maybe_parallel<T, U, E, F>(items: &[T], f: F) -> Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(&T) -> Result<U, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

// std::time::Instant panics on wasm32-unknown-unknown.
struct Clock {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Clock {
    fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn elapsed(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }

    fn exceeded(&self, budget: Option<f64>) -> bool {
        budget.is_some_and(|b| self.elapsed() > b)
    }
}
