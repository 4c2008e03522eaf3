mod common;

use common::{mock_config, replay_trace_config, tiny_trainer};
use rewardsmith_core::dsl::serialize_program;
use rewardsmith_core::env::{EnvId, EnvironmentSpec};
use rewardsmith_core::evolution::*;
use rewardsmith_core::generate::replay::{ReplayEntry, ReplayFixture, ReplayGenerator};
use rewardsmith_core::generate::{Generator, GeneratorError, ProposalRequest};
use rewardsmith_core::generate::mock::MockGenerator;

fn run(cfg: &RunConfig) -> (RunRecord, MemorySink) {
    let mut generator = build_generator(cfg, None).unwrap();
    let evaluator = build_evaluator(cfg).unwrap();
    let mut sink = MemorySink::default();
    let record = run_search(cfg, generator.as_mut(), evaluator.as_ref(), &mut sink).unwrap();
    (record, sink)
}

fn best_scores(record: &RunRecord) -> Vec<Option<f64>> {
    record.best_per_iteration().iter().map(|b| b.map(|b| b.score)).collect()
}

#[test]
fn replay_trace_selects_round_bests() {
    let (record, sink) = run(&replay_trace_config());
    assert_eq!(best_scores(&record), vec![Some(0.3), Some(0.4)]);
    let best = record.eureka_best.as_ref().unwrap();
    assert_eq!(best.score, 0.4);
    assert_eq!(best.candidate, CandidateRef { restart: 0, iteration: 1, sample: 1 });
    assert_eq!(record.final_evaluation.as_ref().unwrap().mean_of_max, 0.4);
    assert_eq!(record.status, RunStatus::Finished);
    assert_eq!(record.best_so_far(0), vec![Some(0.3), Some(0.4)]);

    let round0 = &record.iterations[0];
    assert!(round0.candidates[1].error.as_deref().unwrap().contains("dist_to_goal"));
    assert_eq!(round0.candidates[1].score, None);
    // the round-1 prompt carries the round-0 winner and its reflection
    let prompt = record.iterations[1].prompt.as_ref().unwrap();
    assert!(prompt.user.contains(round0.candidates[2].program_text.as_deref().unwrap()));
    assert!(prompt.feedback_section().unwrap().contains("action_r: ["));
    assert!(sink.artifacts.contains_key(EUREKA_BEST_ARTIFACT));
    assert_eq!(sink.events.len() as u64, record.last_seq);
}

#[test]
fn replaying_events_rebuilds_the_record() {
    let (record, sink) = run(&replay_trace_config());
    let rebuilt = RunRecord::replay(record.run_id.clone(), record.config.clone(), &sink.events).unwrap();
    assert_eq!(rebuilt, record);
}

fn fixture_of(entries: &[(&str, Option<f64>)]) -> ReplayFixture {
    ReplayFixture {
        env: "pointmass_reach".into(),
        entries: entries
            .iter()
            .map(|(t, s)| ReplayEntry { text: t.to_string(), score: *s })
            .collect(),
    }
}

#[test]
fn all_failed_round_carries_first_failure() {
    let fixture = fixture_of(&[
        ("a = -dist", Some(0.5)),
        ("b = -2 * dist", Some(0.2)),
        ("a = -dist_to_goal", None),
        ("b = norm2(", None),
        ("c = -dist", Some(0.9)),
        ("d = -dist", Some(0.1)),
    ]);
    let mut cfg = replay_trace_config();
    cfg.evolution.iterations = 3;
    cfg.evolution.samples = 2;
    let spec = EnvironmentSpec::builtin(EnvId::PointmassReach);
    let evaluator = ScriptedEvaluator::new(&spec, &fixture, 2);
    let mut generator = ReplayGenerator::new(&fixture);
    let mut sink = MemorySink::default();
    let record = run_search(&cfg, &mut generator, &evaluator, &mut sink).unwrap();

    assert_eq!(best_scores(&record), vec![Some(0.5), None, Some(0.9)]);
    let failed = &record.iterations[1];
    let carried = failed.carried.as_ref().unwrap();
    assert_eq!(carried.feedback, failed.candidates[0].feedback.clone().unwrap());
    assert!(carried.feedback.contains("could not be parsed"));
    assert!(carried.feedback.contains("dist_to_goal"));
    let next_prompt = record.iterations[2].prompt.as_ref().unwrap();
    assert!(next_prompt.feedback_section().unwrap().contains("dist_to_goal"));
    // an all-failed round leaves the best untouched
    assert_eq!(record.best_so_far(0), vec![Some(0.5), Some(0.5), Some(0.9)]);
    assert_eq!(record.eureka_best.as_ref().unwrap().score, 0.9);
}

#[test]
fn ties_go_to_the_lowest_sample() {
    let fixture = fixture_of(&[("a = -dist", Some(0.5)), ("b = -2 * dist", Some(0.5))]);
    let mut cfg = replay_trace_config();
    cfg.evolution.iterations = 1;
    cfg.evolution.samples = 2;
    let spec = EnvironmentSpec::builtin(EnvId::PointmassReach);
    let evaluator = ScriptedEvaluator::new(&spec, &fixture, 2);
    let record = run_search(&cfg, &mut ReplayGenerator::new(&fixture), &evaluator, &mut MemorySink::default()).unwrap();
    assert_eq!(record.best_per_iteration()[0].unwrap().candidate.sample, 0);
}

#[test]
fn no_evolution_draws_one_batch() {
    let mut cfg = mock_config(EnvId::PointmassReach, 1, 16, 1);
    cfg.evolution.ablation = Ablation::NoEvolution { total_samples: 32 };
    let (record, sink) = run(&cfg);
    let started: Vec<_> = sink
        .events
        .iter()
        .filter_map(|e| match &e.event {
            Event::IterationStarted { k, prompt, .. } => Some((*k, prompt.clone().unwrap())),
            _ => None,
        })
        .collect();
    assert_eq!(started.len(), 1);
    assert_eq!(started[0].0, 32);
    assert!(started[0].1.feedback_section().is_none());
    assert_eq!(record.candidate_count(), 32);
}

#[test]
fn no_evolution_requires_one_iteration() {
    let mut cfg = mock_config(EnvId::PointmassReach, 2, 16, 1);
    cfg.evolution.ablation = Ablation::NoEvolution { total_samples: 32 };
    assert!(cfg.validate().is_err());
}

#[test]
fn no_reflection_feedback_names_no_components() {
    let mut cfg = mock_config(EnvId::PointmassReach, 3, 4, 1);
    cfg.evolution.ablation = Ablation::NoReflection;
    let (record, _) = run(&cfg);
    for it in &record.iterations[1..] {
        let prior = record.iteration(it.restart, it.iteration - 1).unwrap();
        let best = prior.best.unwrap();
        let names: Vec<String> = prior.candidates[best.candidate.sample]
            .program_text
            .as_deref()
            .unwrap()
            .lines()
            .map(|l| l.split('=').next().unwrap().trim().to_string())
            .collect();
        let feedback = it.prompt.as_ref().unwrap().feedback_section().unwrap();
        assert!(feedback.contains("task_score"));
        for n in names {
            assert!(!feedback.contains(&format!("{n}:")), "{n} in {feedback}");
        }
    }
}

#[test]
fn reflection_names_every_component_in_auto_mode() {
    let cfg = mock_config(EnvId::PointmassReach, 3, 4, 1);
    let (record, _) = run(&cfg);
    for it in &record.iterations[1..] {
        let prior = record.iteration(it.restart, it.iteration - 1).unwrap();
        let Some(best) = prior.best else { continue };
        let program = prior.candidates[best.candidate.sample].program_text.clone().unwrap();
        let feedback = it.prompt.as_ref().unwrap().feedback_section().unwrap();
        for line in program.lines() {
            let name = line.split('=').next().unwrap().trim();
            assert!(feedback.contains(&format!("{name}: [")), "{name} missing from {feedback}");
        }
    }
}

#[test]
fn human_init_seeds_round_zero() {
    let spec = EnvironmentSpec::builtin(EnvId::ReachSuccess);
    let cfg = apply_human_init(&mock_config(EnvId::ReachSuccess, 2, 3, 1), spec.human_reward).unwrap();
    let (record, sink) = run(&cfg);
    let round0 = &record.iterations[0];
    assert_eq!(round0.k, 1);
    assert!(round0.prompt.is_none());
    let canonical = serialize_program(&spec.human_program());
    assert_eq!(round0.candidates[0].program_text.as_deref(), Some(canonical.as_str()));
    assert!(record.iterations[1].prompt.as_ref().unwrap().user.contains(&canonical));
    let human_score = round0.best.unwrap().score;
    assert!(record.best_so_far(0).iter().all(|s| s.unwrap() >= human_score));
    assert_eq!(
        sink.events.iter().filter(|e| matches!(e.event, Event::IterationStarted { .. })).count(),
        2
    );
}

#[test]
fn human_init_rejects_unparseable_program() {
    let cfg = mock_config(EnvId::ReachSuccess, 2, 3, 1);
    assert!(apply_human_init(&cfg, "r = -dist_to_goal").is_err());
}

#[test]
fn human_feedback_rounds() {
    let mut cfg = mock_config(EnvId::PointmassReach, 3, 1, 1);
    cfg.evolution.mode = Mode::HumanFeedback;
    let evaluator = build_evaluator(&cfg).unwrap();
    let mut sink = MemorySink::default();
    let mut record = run_search(&cfg, &mut MockGenerator::new(cfg.seed), evaluator.as_ref(), &mut sink).unwrap();
    assert_eq!(record.status, RunStatus::PausedForFeedback);
    assert_eq!(record.candidate_count(), 0);

    let texts = ["reach the goal quickly", "make it slower and more stable", "penalize large actions"];
    for (i, text) in texts.iter().enumerate() {
        record =
            run_human_feedback_step(record, text, &mut MockGenerator::new(cfg.seed), evaluator.as_ref(), &mut sink)
                .unwrap();
        assert_eq!(record.candidate_count(), i + 1);
        let prompt = record.iterations[i].prompt.as_ref().unwrap();
        assert!(prompt.user.contains(text));
        assert_eq!(record.iterations[i].human_feedback.as_deref(), Some(*text));
    }
    assert_eq!(record.status, RunStatus::Finished);
    assert!(record.iterations[1].prompt.as_ref().unwrap().feedback_section().unwrap().contains(texts[1]));
    let err = run_human_feedback_step(record, "more", &mut MockGenerator::new(cfg.seed), evaluator.as_ref(), &mut sink)
        .unwrap_err();
    assert!(matches!(err, SearchError::NotPaused(RunStatus::Finished)));
}

#[test]
fn second_feedback_without_a_round_is_rejected() {
    let mut cfg = mock_config(EnvId::PointmassReach, 2, 1, 1);
    cfg.evolution.mode = Mode::HumanFeedback;
    let evaluator = build_evaluator(&cfg).unwrap();
    let mut sink = MemorySink::default();
    let record = run_search(&cfg, &mut MockGenerator::new(cfg.seed), evaluator.as_ref(), &mut sink).unwrap();
    let mut pending = record.clone();
    pending
        .apply(&EventEnvelope {
            seq: pending.last_seq + 1,
            event: Event::FeedbackAttached { restart: 0, iteration: 0, text: "first".into() },
        })
        .unwrap();
    assert_eq!(pending.status, RunStatus::Running);
    let second = EventEnvelope {
        seq: pending.last_seq + 1,
        event: Event::FeedbackAttached { restart: 0, iteration: 0, text: "second".into() },
    };
    assert!(pending.clone().apply(&second).is_err());
    let err = run_human_feedback_step(pending, "second", &mut MockGenerator::new(1), evaluator.as_ref(), &mut sink)
        .unwrap_err();
    assert!(matches!(err, SearchError::NotPaused(RunStatus::Running)));
}

#[test]
fn mock_runs_are_bit_identical() {
    let cfg = mock_config(EnvId::PointmassReach, 3, 4, 2);
    let (a, sa) = run(&cfg);
    let (b, sb) = run(&cfg);
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&sa.events).unwrap(), serde_json::to_string(&sb.events).unwrap());
    assert_eq!(a.candidate_count(), 2 * 3 * 4);
}

#[test]
fn resume_after_crash_matches_uninterrupted_run() {
    let cfg = mock_config(EnvId::PointmassReach, 3, 3, 2);
    let (full, full_sink) = run(&cfg);
    let total = full_sink.events.len();
    for cut in [1, 2, 5, total / 2, total - 2, total - 1] {
        let evaluator = build_evaluator(&cfg).unwrap();
        let mut sink = MemorySink { fail_after: Some(cut), ..Default::default() };
        let err = run_search(&cfg, &mut MockGenerator::new(cfg.seed), evaluator.as_ref(), &mut sink).unwrap_err();
        assert!(matches!(err, SearchError::Sink(_)));
        let partial = RunRecord::replay(full.run_id.clone(), cfg.clone(), &sink.events).unwrap();
        sink.fail_after = None;
        let resumed = resume_search(partial, &mut MockGenerator::new(cfg.seed), evaluator.as_ref(), &mut sink).unwrap();
        assert_eq!(resumed, full, "cut at {cut}");
        assert_eq!(sink.events, full_sink.events);
    }
}

#[test]
fn replay_resume_skips_consumed_samples() {
    let cfg = replay_trace_config();
    let (full, full_sink) = run(&cfg);
    for cut in 1..full_sink.events.len() {
        let partial = RunRecord::replay(full.run_id.clone(), cfg.clone(), &full_sink.events[..cut]).unwrap();
        let mut sink = MemorySink { events: full_sink.events[..cut].to_vec(), ..Default::default() };
        let mut generator = build_generator(&cfg, None).unwrap();
        let evaluator = build_evaluator(&cfg).unwrap();
        let resumed = resume_search(partial, generator.as_mut(), evaluator.as_ref(), &mut sink).unwrap();
        assert_eq!(resumed, full, "cut at {cut}");
    }
}

struct FlakyGenerator {
    inner: MockGenerator,
    calls_before_failure: usize,
}

impl Generator for FlakyGenerator {
    fn kind(&self) -> &'static str {
        "flaky"
    }

    fn propose_raw(&mut self, request: &ProposalRequest<'_>) -> Result<Vec<String>, GeneratorError> {
        if self.calls_before_failure == 0 {
            return Err(GeneratorError::Transport { attempts: 4, message: "connection reset".into() });
        }
        self.calls_before_failure -= 1;
        self.inner.propose_raw(request)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

#[test]
fn transport_failure_marks_run_failed_and_keeps_record() {
    let cfg = mock_config(EnvId::PointmassReach, 3, 2, 1);
    let evaluator = build_evaluator(&cfg).unwrap();
    let mut sink = MemorySink::default();
    let mut flaky = FlakyGenerator { inner: MockGenerator::new(cfg.seed), calls_before_failure: 1 };
    let err = run_search(&cfg, &mut flaky, evaluator.as_ref(), &mut sink).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    let failed = RunRecord::replay("x".into(), cfg.clone(), &sink.events).unwrap();
    assert_eq!(failed.status, RunStatus::Failed);
    assert_eq!(failed.closed_rounds(), 1);

    let resumed = resume_search(failed, &mut MockGenerator::new(cfg.seed), evaluator.as_ref(), &mut sink).unwrap();
    let (full, _) = run(&cfg);
    assert_eq!(resumed.iterations, full.iterations);
    assert_eq!(resumed.eureka_best, full.eureka_best);
    assert_eq!(resumed.status, RunStatus::Finished);
}

#[test]
fn forged_best_is_rejected() {
    let (record, sink) = run(&replay_trace_config());
    let mut events = sink.events.clone();
    for e in &mut events {
        if let Event::IterationClosed { best: Some(b), .. } = &mut e.event {
            b.score += 1.0;
        }
    }
    assert!(RunRecord::replay(record.run_id.clone(), record.config.clone(), &events).is_err());
}

#[test]
fn curriculum_reuses_program_verbatim() {
    let mut cfg = mock_config(EnvId::ReachSuccess, 1, 2, 1);
    cfg.trainer = tiny_trainer();
    let evaluator = build_evaluator(&cfg).unwrap();
    let mut zero = tiny_trainer();
    zero.generations = 0;
    zero.checkpoints = 0;
    let result = run_curriculum(
        &cfg,
        &mut MockGenerator::new(cfg.seed),
        evaluator.as_ref(),
        &mut MemorySink::default(),
        EnvId::WaypointRelay,
        &zero,
        &[0, 1],
    )
    .unwrap();
    assert_eq!(result.program_text, result.stage_a.eureka_best.as_ref().unwrap().program_text);
    for s in &result.seeds {
        assert_eq!(s.fine_tuned, s.pretrained);
    }
}

#[test]
fn curriculum_rejects_incompatible_registries() {
    let cfg = mock_config(EnvId::ReachSuccess, 1, 2, 1);
    let evaluator = build_evaluator(&cfg).unwrap();
    let err = run_curriculum(
        &cfg,
        &mut MockGenerator::new(cfg.seed),
        evaluator.as_ref(),
        &mut MemorySink::default(),
        EnvId::Cartpole,
        &tiny_trainer(),
        &[0],
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
