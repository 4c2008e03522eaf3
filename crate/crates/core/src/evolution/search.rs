//! The search loop: propose, score, reflect, carry the round's best forward.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use thiserror::Error;

use super::config::{Ablation, EvaluatorKind, GeneratorKind, Mode, RunConfig};
use super::record::{select_best, Event, EventEnvelope, RecordError, RunRecord, RunStatus};
use super::CandidateRef;
use crate::dsl::{parse_program, serialize_program, RewardProgram};
use crate::env::EnvironmentSpec;
use crate::generate::l2r::L2rGenerator;
use crate::generate::llm::{ChatTransport, LlmGenerator, LlmSettings};
use crate::generate::mock::MockGenerator;
use crate::generate::replay::{ReplayFixture, ReplayGenerator};
use crate::generate::{
    assemble_prompt, propose_with_prompt, Generator, GeneratorContext, GeneratorError, Prior, PromptBundle, Proposal,
};
use crate::policy::{
    evaluate_policy_final_detailed, map_maybe_parallel, train_policy, FinalEvaluation, Snapshot, TrainerConfig,
    TrainingFailure, TrainingReport,
};
use crate::reflection::{build_failure_feedback, build_fitness_only_feedback, build_reflection, CandidateFailure};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error("run storage failed: {0}")]
    Sink(String),
    #[error("run record rejected an event: {0}")]
    Record(#[from] RecordError),
    #[error("run is {0:?}, not waiting for feedback")]
    NotPaused(RunStatus),
    #[error("resumed run diverged from its record: {0}")]
    Diverged(String),
}

impl SearchError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            SearchError::Config(_) => 2,
            SearchError::Generator(_) => 3,
            _ => 1,
        }
    }
}

/// Scores reward programs.
pub trait Evaluator: Send + Sync {
    /// Intermediate score: mean final fitness over `runs` trainings with
    /// seeds `seed..seed + runs`. The report is the first run's.
    fn score(&self, program: &RewardProgram, seed: u64, runs: usize) -> Result<(f64, TrainingReport), TrainingFailure>;

    fn final_evaluation(&self, program: &RewardProgram, seed: u64, runs: usize) -> Result<FinalEvaluation, TrainingFailure>;
}

pub struct TrainingEvaluator {
    pub spec: Arc<EnvironmentSpec>,
    pub trainer: TrainerConfig,
}

impl Evaluator for TrainingEvaluator {
    fn score(&self, program: &RewardProgram, seed: u64, runs: usize) -> Result<(f64, TrainingReport), TrainingFailure> {
        let (_, first) = train_policy(&self.spec, program, &self.trainer.with_seed(seed))?;
        let mut total = first.final_fitness;
        for i in 1..runs as u64 {
            let (_, r) = train_policy(&self.spec, program, &self.trainer.with_seed(seed.wrapping_add(i)))?;
            total += r.final_fitness;
        }
        Ok((total / runs as f64, first))
    }

    fn final_evaluation(&self, program: &RewardProgram, seed: u64, runs: usize) -> Result<FinalEvaluation, TrainingFailure> {
        evaluate_policy_final_detailed(&self.spec, program, &self.trainer.with_seed(seed), runs)
    }
}

/// Looks scores up in a replay fixture instead of training.
pub struct ScriptedEvaluator {
    scores: HashMap<String, f64>,
    checkpoints: usize,
    episode_length: usize,
}

impl ScriptedEvaluator {
    pub fn new(spec: &EnvironmentSpec, fixture: &ReplayFixture, checkpoints: usize) -> Self {
        let scores = fixture
            .entries
            .iter()
            .filter_map(|e| {
                let score = e.score?;
                let p = Proposal::from_raw(e.text.clone(), &spec.registry);
                Some((serialize_program(p.program()?), score))
            })
            .collect();
        Self {
            scores,
            checkpoints: checkpoints.max(1),
            episode_length: spec.episode_length,
        }
    }

    fn lookup(&self, program: &RewardProgram) -> Result<f64, TrainingFailure> {
        self.scores.get(&serialize_program(program)).copied().ok_or_else(|| TrainingFailure {
            step: 0,
            message: "the fixture records no score for this program".into(),
        })
    }
}

impl Evaluator for ScriptedEvaluator {
    fn score(&self, program: &RewardProgram, _seed: u64, _runs: usize) -> Result<(f64, TrainingReport), TrainingFailure> {
        let score = self.lookup(program)?;
        let snapshot = |generation| Snapshot {
            generation,
            fitness: score,
            component_means: program.component_names().iter().map(|n| (n.to_string(), 0.0)).collect::<BTreeMap<_, _>>(),
            episode_length_mean: self.episode_length as f64,
            reward_mean: 0.0,
        };
        let report = TrainingReport {
            checkpoint_snapshots: (1..=self.checkpoints).map(snapshot).collect(),
            initial_fitness: score,
            final_fitness: score,
            transitions_sample: Vec::new(),
            timed_out: false,
            wall_time_secs: 0.0,
        };
        Ok((score, report))
    }

    fn final_evaluation(&self, program: &RewardProgram, _seed: u64, runs: usize) -> Result<FinalEvaluation, TrainingFailure> {
        let score = self.lookup(program)?;
        Ok(FinalEvaluation {
            run_fitness: vec![score; runs],
            mean_of_max: score,
            max_of_mean: score,
        })
    }
}

/// Where events and artifacts go.
pub trait EventSink {
    /// Persist one event. Must be durable before returning.
    fn append(&mut self, event: &EventEnvelope) -> Result<(), String>;

    fn write_artifact(&mut self, name: &str, contents: &[u8]) -> Result<(), String>;
}

#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub events: Vec<EventEnvelope>,
    pub artifacts: BTreeMap<String, Vec<u8>>,
    /// Reject appends once this many events are stored; simulates a crash.
    pub fail_after: Option<usize>,
}

impl EventSink for MemorySink {
    fn append(&mut self, event: &EventEnvelope) -> Result<(), String> {
        if self.fail_after.is_some_and(|n| self.events.len() >= n) {
            return Err("simulated crash".into());
        }
        self.events.push(event.clone());
        Ok(())
    }

    fn write_artifact(&mut self, name: &str, contents: &[u8]) -> Result<(), String> {
        self.artifacts.insert(name.to_string(), contents.to_vec());
        Ok(())
    }
}

/// Generator named by the config. Chat-backed kinds need `transport`.
pub fn build_generator(
    cfg: &RunConfig,
    transport: Option<Box<dyn ChatTransport>>,
) -> Result<Box<dyn Generator>, SearchError> {
    let g = &cfg.generator;
    let settings = || LlmSettings {
        model: g.model.clone().unwrap_or_default(),
        max_retries: g.max_retries,
        ..LlmSettings::default()
    };
    Ok(match g.kind {
        GeneratorKind::Mock => Box::new(MockGenerator::new(cfg.seed)),
        GeneratorKind::Replay => Box::new(ReplayGenerator::new(&load_fixture(cfg)?)),
        GeneratorKind::L2r if !g.l2r_use_llm => Box::new(L2rGenerator::seeded(cfg.seed)),
        GeneratorKind::L2r => {
            let t = transport.ok_or_else(|| SearchError::Config("l2r_use_llm needs a chat transport".into()))?;
            Box::new(L2rGenerator::with_chat(t, settings()))
        }
        GeneratorKind::Llm => {
            let t = transport.ok_or_else(|| SearchError::Config("the llm generator needs a chat transport".into()))?;
            Box::new(LlmGenerator::new(t, settings()))
        }
    })
}

fn load_fixture(cfg: &RunConfig) -> Result<ReplayFixture, SearchError> {
    let path = cfg
        .generator
        .fixture
        .as_ref()
        .ok_or_else(|| SearchError::Config("the replay generator needs a fixture path".into()))?;
    ReplayFixture::load(path).map_err(|e| SearchError::Config(e.to_string()))
}

/// Evaluator named by the config.
pub fn build_evaluator(cfg: &RunConfig) -> Result<Box<dyn Evaluator>, SearchError> {
    let spec = cfg.spec().map_err(SearchError::Config)?;
    Ok(match cfg.evolution.evaluator {
        EvaluatorKind::Training => Box::new(TrainingEvaluator {
            spec,
            trainer: cfg.trainer.clone(),
        }),
        EvaluatorKind::Scripted => Box::new(ScriptedEvaluator::new(&spec, &load_fixture(cfg)?, cfg.trainer.checkpoints)),
    })
}

/// Run a search from scratch. Human-feedback runs return paused.
pub fn run_search(
    cfg: &RunConfig,
    generator: &mut dyn Generator,
    evaluator: &dyn Evaluator,
    sink: &mut dyn EventSink,
) -> Result<RunRecord, SearchError> {
    cfg.validate().map_err(SearchError::Config)?;
    let record = RunRecord::new(cfg.run_id(), cfg.clone());
    Driver::new(record, generator, evaluator, sink)?.drive()
}

/// Continue a run from its record. `generator` must be freshly built: any
/// samples already recorded are skipped or regenerated and checked.
pub fn resume_search(
    record: RunRecord,
    generator: &mut dyn Generator,
    evaluator: &dyn Evaluator,
    sink: &mut dyn EventSink,
) -> Result<RunRecord, SearchError> {
    Driver::new(record, generator, evaluator, sink)?.drive()
}

/// Attach typed feedback to a paused human-feedback run and run one round.
pub fn run_human_feedback_step(
    record: RunRecord,
    feedback_text: &str,
    generator: &mut dyn Generator,
    evaluator: &dyn Evaluator,
    sink: &mut dyn EventSink,
) -> Result<RunRecord, SearchError> {
    let record = attach_human_feedback(record, feedback_text, sink)?;
    resume_search(record, generator, evaluator, sink)
}

/// Record typed feedback without running the round it steers. The run
/// leaves the paused state as soon as this returns.
pub fn attach_human_feedback(
    mut record: RunRecord,
    feedback_text: &str,
    sink: &mut dyn EventSink,
) -> Result<RunRecord, SearchError> {
    if record.status != RunStatus::PausedForFeedback {
        return Err(SearchError::NotPaused(record.status));
    }
    let envelope = EventEnvelope {
        seq: record.last_seq + 1,
        event: Event::FeedbackAttached {
            restart: 0,
            iteration: record.closed_rounds(),
            text: feedback_text.to_string(),
        },
    };
    record.apply(&envelope)?;
    sink.append(&envelope).map_err(SearchError::Sink)?;
    Ok(record)
}

/// Artifact name for a round's best program.
pub fn round_artifact(restart: usize, iteration: usize) -> String {
    format!("r{restart}_i{iteration}_best.json")
}

pub const EUREKA_BEST_ARTIFACT: &str = "eureka_best.json";

/// Contents of a best-program artifact.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BestArtifact {
    pub candidate: CandidateRef,
    pub program_text: String,
    pub score: f64,
    pub feedback: String,
    pub transitions: Vec<crate::env::FrameTransition>,
}

struct Driver<'a> {
    record: RunRecord,
    spec: Arc<EnvironmentSpec>,
    generator: &'a mut dyn Generator,
    evaluator: &'a dyn Evaluator,
    sink: &'a mut dyn EventSink,
    /// Full reports from this process, transitions included.
    reports: HashMap<CandidateRef, TrainingReport>,
}

impl<'a> Driver<'a> {
    fn new(
        record: RunRecord,
        generator: &'a mut dyn Generator,
        evaluator: &'a dyn Evaluator,
        sink: &'a mut dyn EventSink,
    ) -> Result<Self, SearchError> {
        let spec = record.config.spec().map_err(SearchError::Config)?;
        Ok(Self {
            record,
            spec,
            generator,
            evaluator,
            sink,
            reports: HashMap::new(),
        })
    }

    fn emit(&mut self, event: Event) -> Result<(), SearchError> {
        let envelope = EventEnvelope {
            seq: self.record.last_seq + 1,
            event,
        };
        self.record.apply(&envelope)?;
        self.sink.append(&envelope).map_err(SearchError::Sink)
    }

    fn artifact<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<(), SearchError> {
        let bytes = serde_json::to_vec_pretty(value).map_err(|e| SearchError::Sink(e.to_string()))?;
        self.sink.write_artifact(name, &bytes).map_err(SearchError::Sink)
    }

    fn drive(mut self) -> Result<RunRecord, SearchError> {
        match self.drive_inner() {
            Err(SearchError::Generator(e)) => {
                self.emit(Event::RunFailed { message: e.to_string() })?;
                Err(SearchError::Generator(e))
            }
            Err(e) => Err(e),
            Ok(()) => Ok(self.record),
        }
    }

    fn drive_inner(&mut self) -> Result<(), SearchError> {
        if self.record.status == RunStatus::Finished {
            return Ok(());
        }
        let cfg = self.record.config.clone();
        let evo = &cfg.evolution;
        let human_feedback = evo.mode == Mode::HumanFeedback;
        for restart in 0..evo.restarts {
            let mut ctx = GeneratorContext::initial(&self.spec, restart);
            for iteration in 0..evo.iterations {
                if let Some(it) = self.record.iteration(restart, iteration).filter(|it| it.is_closed()) {
                    if it.prompt.is_some() {
                        self.generator.skip(it.k);
                    }
                    let carried = it.carried.clone().expect("closed");
                    ctx = self.next_context(&ctx, carried, iteration + 1);
                    continue;
                }
                if human_feedback {
                    let text = match self.record.iteration(restart, iteration) {
                        Some(open) => open.human_feedback.clone(),
                        None => self.record.pending_feedback.as_ref().map(|p| p.2.clone()),
                    };
                    let Some(text) = text else {
                        // paused until the next feedback arrives
                        return Ok(());
                    };
                    match ctx.prior.as_mut() {
                        Some(prior) => prior.feedback = text,
                        None => ctx.instruction = Some(text),
                    }
                }
                let carried = self.run_round(&ctx, restart, iteration)?;
                ctx = self.next_context(&ctx, carried, iteration + 1);
            }
        }
        self.finish()
    }

    /// Context for round `iteration` of the same restart.
    fn next_context(&self, ctx: &GeneratorContext, carried: Prior, iteration: usize) -> GeneratorContext {
        let mut next = ctx.next(carried);
        next.iteration = iteration;
        next
    }

    fn human_init_round(&self, iteration: usize) -> Option<String> {
        if iteration == 0 {
            self.record.config.human_init_text()
        } else {
            None
        }
    }

    fn run_round(&mut self, ctx: &GeneratorContext, restart: usize, iteration: usize) -> Result<Prior, SearchError> {
        let cfg = self.record.config.clone();
        let human_init = self.human_init_round(iteration);
        let k = if human_init.is_some() { 1 } else { cfg.evolution.samples_per_round() };
        let prompt: Option<PromptBundle> = human_init.is_none().then(|| assemble_prompt(ctx));

        match self.record.iteration(restart, iteration) {
            None => self.emit(Event::IterationStarted {
                restart,
                iteration,
                k,
                prompt: prompt.clone(),
            })?,
            Some(open) if open.prompt != prompt || open.k != k => {
                return Err(SearchError::Diverged(format!(
                    "round ({restart}, {iteration}) was started with a different prompt or sample count"
                )))
            }
            Some(_) => {}
        }

        let have = self.record.iteration(restart, iteration).map_or(0, |it| it.candidates.len());
        if have < k {
            let fresh: Vec<String> = match (&human_init, &prompt) {
                (Some(text), _) => vec![text.clone()],
                (None, Some(prompt)) if self.generator.is_deterministic() => {
                    let all = propose_with_prompt(self.generator, ctx, prompt, k, cfg.generator.temperature)?;
                    let recorded = &self.record.iteration(restart, iteration).expect("started").candidates;
                    for (c, p) in recorded.iter().zip(&all) {
                        if c.raw_text != p.raw_text {
                            return Err(SearchError::Diverged(format!(
                                "sample {} of round ({restart}, {iteration}) differs from the recorded one",
                                c.index.sample
                            )));
                        }
                    }
                    all.into_iter().skip(have).map(|p| p.raw_text).collect()
                }
                (None, Some(prompt)) => {
                    propose_with_prompt(self.generator, ctx, prompt, k - have, cfg.generator.temperature)?
                        .into_iter()
                        .map(|p| p.raw_text)
                        .collect()
                }
                (None, None) => unreachable!("generator rounds always have a prompt"),
            };
            for (offset, raw) in fresh.into_iter().enumerate() {
                let proposal = Proposal::from_raw(raw, &self.spec.registry);
                let (program_text, error) = match &proposal.result {
                    Ok(p) => (Some(serialize_program(p)), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                self.emit(Event::CandidateProposed {
                    candidate: CandidateRef {
                        restart,
                        iteration,
                        sample: have + offset,
                    },
                    raw_text: proposal.raw_text,
                    program_text,
                    error,
                })?;
            }
        } else if prompt.is_some() {
            // every sample was recorded before the interruption
            self.generator.skip(k);
        }

        self.score_round(restart, iteration)?;
        self.close_round(restart, iteration)
    }

    fn score_round(&mut self, restart: usize, iteration: usize) -> Result<(), SearchError> {
        let cfg = self.record.config.clone();
        let seed = cfg.restart_trainer_seed(restart);
        let runs = cfg.evolution.intermediate_runs;
        let no_reflection = cfg.evolution.ablation == Ablation::NoReflection;
        let pending: Vec<(CandidateRef, Result<RewardProgram, String>)> = self
            .record
            .iteration(restart, iteration)
            .expect("started")
            .candidates
            .iter()
            .filter(|c| !c.scored)
            .map(|c| {
                let program = match (&c.program_text, &c.error) {
                    (Some(text), _) => parse_program(text, &self.spec.registry).map_err(|e| e.to_string()),
                    (None, err) => Err(err.clone().unwrap_or_default()),
                };
                (c.index, program)
            })
            .collect();
        let evaluator = self.evaluator;
        let results = map_maybe_parallel(&pending, |(_, program)| {
            Ok::<_, std::convert::Infallible>(match program {
                Ok(p) => Some(evaluator.score(p, seed, runs)),
                Err(_) => None,
            })
        })
        .unwrap_or_else(|e| match e {});

        for ((candidate, program), result) in pending.into_iter().zip(results) {
            let event = match (program, result) {
                (Ok(_), None) => unreachable!("parsed candidates are always trained"),
                (Err(message), _) => {
                    let failure = CandidateFailure::Parse { message };
                    Event::CandidateScored {
                        candidate,
                        score: None,
                        report: None,
                        feedback: build_failure_feedback(&failure),
                        failure: Some(failure),
                    }
                }
                (Ok(_), Some(Err(e))) => {
                    let failure = CandidateFailure::Training(e);
                    Event::CandidateScored {
                        candidate,
                        score: None,
                        report: None,
                        feedback: build_failure_feedback(&failure),
                        failure: Some(failure),
                    }
                }
                (Ok(program), Some(Ok((score, report)))) => {
                    let feedback = if no_reflection {
                        build_fitness_only_feedback(&report)
                    } else {
                        build_reflection(&report, &program)
                            .map(|r| r.text)
                            .unwrap_or_else(|_| build_fitness_only_feedback(&report))
                    };
                    let failure = report.timed_out.then_some(CandidateFailure::TimedOut { score });
                    let mut stored = report.clone();
                    stored.transitions_sample.clear();
                    // wall time would make otherwise identical records differ
                    stored.wall_time_secs = 0.0;
                    self.reports.insert(candidate, report);
                    Event::CandidateScored {
                        candidate,
                        score: Some(score),
                        report: Some(stored),
                        feedback,
                        failure,
                    }
                }
            };
            self.emit(event)?;
        }
        Ok(())
    }

    fn close_round(&mut self, restart: usize, iteration: usize) -> Result<Prior, SearchError> {
        let it = self.record.iteration(restart, iteration).expect("started");
        let best = select_best(&it.candidates);
        let carried = match best {
            Some(b) => {
                let c = &it.candidates[b.candidate.sample];
                Prior {
                    program_text: c.program_text.clone().expect("scored"),
                    feedback: c.feedback.clone().unwrap_or_default(),
                }
            }
            None => {
                // every sample failed: carry the first failure
                let c = &it.candidates[0];
                Prior {
                    program_text: c.program_text.clone().unwrap_or_else(|| c.raw_text.clone()),
                    feedback: c.feedback.clone().unwrap_or_default(),
                }
            }
        };
        if let Some(b) = best {
            let artifact = self.best_artifact(b.candidate, b.score, &carried)?;
            self.artifact(&round_artifact(restart, iteration), &artifact)?;
        }
        self.emit(Event::IterationClosed {
            restart,
            iteration,
            best,
            carried: carried.clone(),
        })?;
        Ok(carried)
    }

    fn best_artifact(&mut self, candidate: CandidateRef, score: f64, carried: &Prior) -> Result<BestArtifact, SearchError> {
        let transitions = match self.reports.get(&candidate) {
            Some(r) => r.transitions_sample.clone(),
            None => {
                // scored by an earlier process; retraining with the same seed reproduces it
                let program = parse_program(&carried.program_text, &self.spec.registry)
                    .map_err(|e| SearchError::Diverged(e.to_string()))?;
                let seed = self.record.config.restart_trainer_seed(candidate.restart);
                self.evaluator
                    .score(&program, seed, self.record.config.evolution.intermediate_runs)
                    .map(|(_, r)| r.transitions_sample)
                    .unwrap_or_default()
            }
        };
        Ok(BestArtifact {
            candidate,
            program_text: carried.program_text.clone(),
            score,
            feedback: carried.feedback.clone(),
            transitions,
        })
    }

    fn finish(&mut self) -> Result<(), SearchError> {
        let cfg = self.record.config.clone();
        let eureka_best = self.record.eureka_best.clone();
        let final_evaluation = match &eureka_best {
            None => None,
            Some(best) => {
                let program = parse_program(&best.program_text, &self.spec.registry)
                    .map_err(|e| SearchError::Diverged(e.to_string()))?;
                let carried = Prior {
                    program_text: best.program_text.clone(),
                    feedback: self
                        .record
                        .candidate(best.candidate)
                        .and_then(|c| c.feedback.clone())
                        .unwrap_or_default(),
                };
                let artifact = self.best_artifact(best.candidate, best.score, &carried)?;
                self.artifact(EUREKA_BEST_ARTIFACT, &artifact)?;
                match self.evaluator.final_evaluation(&program, cfg.trainer.seed, cfg.evolution.final_runs) {
                    Ok(f) => Some(f),
                    Err(e) => {
                        log::warn!("final evaluation of the best program failed: {e}");
                        None
                    }
                }
            }
        };
        self.emit(Event::RunFinished {
            eureka_best,
            final_evaluation,
        })
    }
}
