//! Run records and the events that build them.
//!
//! A [`RunRecord`] is never edited directly: it is the fold of its event
//! log. The orchestrator applies each event to its in-memory record before
//! appending it to storage, and loading replays the same events, so a
//! loaded record and a live one are built by the same code.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{Mode, RunConfig};
use crate::generate::{Prior, PromptBundle};
use crate::policy::{FinalEvaluation, TrainingReport};
use crate::reflection::CandidateFailure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CandidateRef {
    pub restart: usize,
    pub iteration: usize,
    pub sample: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredRef {
    pub candidate: CandidateRef,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub index: CandidateRef,
    pub raw_text: String,
    /// Canonical program text when the sample parsed.
    pub program_text: Option<String>,
    /// Parse or extraction error otherwise.
    pub error: Option<String>,
    pub score: Option<f64>,
    /// Training statistics, without the transition sample.
    pub report: Option<TrainingReport>,
    pub feedback: Option<String>,
    pub failure: Option<CandidateFailure>,
    pub scored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub restart: usize,
    pub iteration: usize,
    pub k: usize,
    /// `None` when the round did not call the generator (human init).
    pub prompt: Option<PromptBundle>,
    /// Typed feedback that steered this round (human-feedback mode).
    pub human_feedback: Option<String>,
    pub candidates: Vec<Candidate>,
    pub best: Option<ScoredRef>,
    /// What the next round is given. Set when the round closes.
    pub carried: Option<Prior>,
}

impl IterationRecord {
    pub fn is_closed(&self) -> bool {
        self.carried.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EurekaBest {
    pub candidate: CandidateRef,
    pub program_text: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    PausedForFeedback,
    Finished,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    IterationStarted {
        restart: usize,
        iteration: usize,
        k: usize,
        prompt: Option<PromptBundle>,
    },
    CandidateProposed {
        candidate: CandidateRef,
        raw_text: String,
        program_text: Option<String>,
        error: Option<String>,
    },
    CandidateScored {
        candidate: CandidateRef,
        score: Option<f64>,
        report: Option<TrainingReport>,
        feedback: String,
        failure: Option<CandidateFailure>,
    },
    IterationClosed {
        restart: usize,
        iteration: usize,
        best: Option<ScoredRef>,
        carried: Prior,
    },
    FeedbackAttached {
        restart: usize,
        iteration: usize,
        text: String,
    },
    RunFinished {
        eureka_best: Option<EurekaBest>,
        final_evaluation: Option<FinalEvaluation>,
    },
    RunFailed {
        message: String,
    },
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::IterationStarted { .. } => "iteration_started",
            Event::CandidateProposed { .. } => "candidate_proposed",
            Event::CandidateScored { .. } => "candidate_scored",
            Event::IterationClosed { .. } => "iteration_closed",
            Event::FeedbackAttached { .. } => "feedback_attached",
            Event::RunFinished { .. } => "run_finished",
            Event::RunFailed { .. } => "run_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEnvelope {
    pub seq: u64,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("event {seq} ({event}): {message}")]
pub struct RecordError {
    pub seq: u64,
    pub event: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config: RunConfig,
    pub iterations: Vec<IterationRecord>,
    pub eureka_best: Option<EurekaBest>,
    pub final_evaluation: Option<FinalEvaluation>,
    pub status: RunStatus,
    pub failure: Option<String>,
    pub last_seq: u64,
    /// Pending typed feedback for the next round.
    pub pending_feedback: Option<(usize, usize, String)>,
}

/// Best scored candidate: highest score, ties to the lowest sample index.
pub fn select_best(candidates: &[Candidate]) -> Option<ScoredRef> {
    let mut best: Option<ScoredRef> = None;
    for c in candidates {
        if let Some(s) = c.score {
            if best.is_none_or(|b| s > b.score) {
                best = Some(ScoredRef {
                    candidate: c.index,
                    score: s,
                });
            }
        }
    }
    best
}

impl RunRecord {
    pub fn new(run_id: String, config: RunConfig) -> Self {
        let mut r = Self {
            run_id,
            config,
            iterations: Vec::new(),
            eureka_best: None,
            final_evaluation: None,
            status: RunStatus::Running,
            failure: None,
            last_seq: 0,
            pending_feedback: None,
        };
        r.status = r.derive_status();
        r
    }

    /// Rebuild a record from its events.
    pub fn replay(run_id: String, config: RunConfig, events: &[EventEnvelope]) -> Result<Self, RecordError> {
        let mut r = Self::new(run_id, config);
        for e in events {
            r.apply(e)?;
        }
        Ok(r)
    }

    pub fn iteration(&self, restart: usize, iteration: usize) -> Option<&IterationRecord> {
        self.iterations
            .iter()
            .find(|it| it.restart == restart && it.iteration == iteration)
    }

    fn iteration_mut(&mut self, restart: usize, iteration: usize) -> Option<&mut IterationRecord> {
        self.iterations
            .iter_mut()
            .find(|it| it.restart == restart && it.iteration == iteration)
    }

    pub fn candidate(&self, r: CandidateRef) -> Option<&Candidate> {
        self.iteration(r.restart, r.iteration)?.candidates.get(r.sample)
    }

    /// Per-round best, in round order; `None` for rounds where every sample failed.
    pub fn best_per_iteration(&self) -> Vec<Option<ScoredRef>> {
        self.iterations.iter().filter(|it| it.is_closed()).map(|it| it.best).collect()
    }

    /// Running maximum of round bests within one restart.
    pub fn best_so_far(&self, restart: usize) -> Vec<Option<f64>> {
        let mut out = Vec::new();
        let mut cur: Option<f64> = None;
        for it in self.iterations.iter().filter(|it| it.restart == restart && it.is_closed()) {
            if let Some(b) = it.best {
                cur = Some(cur.map_or(b.score, |c: f64| c.max(b.score)));
            }
            out.push(cur);
        }
        out
    }

    pub fn candidate_count(&self) -> usize {
        self.iterations.iter().map(|it| it.candidates.len()).sum()
    }

    /// Closed rounds in the (single) restart of a human-feedback run.
    pub fn closed_rounds(&self) -> usize {
        self.iterations.iter().filter(|it| it.is_closed()).count()
    }

    fn open_iteration(&self) -> Option<&IterationRecord> {
        self.iterations.last().filter(|it| !it.is_closed())
    }

    fn derive_status(&self) -> RunStatus {
        if self.final_evaluation.is_some() || self.status == RunStatus::Finished {
            return RunStatus::Finished;
        }
        if self.failure.is_some() {
            return RunStatus::Failed;
        }
        if self.config.evolution.mode == Mode::HumanFeedback
            && self.open_iteration().is_none()
            && self.pending_feedback.is_none()
            && self.closed_rounds() < self.config.evolution.iterations
        {
            return RunStatus::PausedForFeedback;
        }
        RunStatus::Running
    }

    /// Apply one event, checking that it is consistent with the record.
    pub fn apply(&mut self, env: &EventEnvelope) -> Result<(), RecordError> {
        let name = env.event.name();
        let fail = |message: String| RecordError {
            seq: env.seq,
            event: name,
            message,
        };
        if env.seq <= self.last_seq {
            return Err(fail(format!("sequence number does not increase (last {})", self.last_seq)));
        }
        if self.status == RunStatus::Finished {
            return Err(fail("run already finished".into()));
        }
        match &env.event {
            Event::IterationStarted {
                restart,
                iteration,
                k,
                prompt,
            } => {
                if self.open_iteration().is_some() {
                    return Err(fail("previous round is still open".into()));
                }
                let expected = match self.iterations.last() {
                    None => (0, 0),
                    Some(last) if last.iteration + 1 == self.config.evolution.iterations => (last.restart + 1, 0),
                    Some(last) => (last.restart, last.iteration + 1),
                };
                if (*restart, *iteration) != expected {
                    return Err(fail(format!("expected round {expected:?}, got ({restart}, {iteration})")));
                }
                if *restart >= self.config.evolution.restarts || *k == 0 {
                    return Err(fail("round outside the configured budget".into()));
                }
                let human_feedback = match self.pending_feedback.take() {
                    Some((r, i, text)) if (r, i) == (*restart, *iteration) => Some(text),
                    Some(other) => return Err(fail(format!("feedback pending for round {:?}", (other.0, other.1)))),
                    None if self.config.evolution.mode == Mode::HumanFeedback => {
                        return Err(fail("human-feedback round started without feedback".into()))
                    }
                    None => None,
                };
                self.iterations.push(IterationRecord {
                    restart: *restart,
                    iteration: *iteration,
                    k: *k,
                    prompt: prompt.clone(),
                    human_feedback,
                    candidates: Vec::new(),
                    best: None,
                    carried: None,
                });
            }
            Event::CandidateProposed {
                candidate,
                raw_text,
                program_text,
                error,
            } => {
                let it = self
                    .iterations
                    .last_mut()
                    .filter(|it| !it.is_closed())
                    .ok_or_else(|| fail("no open round".into()))?;
                if (candidate.restart, candidate.iteration) != (it.restart, it.iteration)
                    || candidate.sample != it.candidates.len()
                    || candidate.sample >= it.k
                {
                    return Err(fail(format!("unexpected candidate index {candidate:?}")));
                }
                if program_text.is_some() == error.is_some() {
                    return Err(fail("a candidate has either a program or an error".into()));
                }
                it.candidates.push(Candidate {
                    index: *candidate,
                    raw_text: raw_text.clone(),
                    program_text: program_text.clone(),
                    error: error.clone(),
                    score: None,
                    report: None,
                    feedback: None,
                    failure: None,
                    scored: false,
                });
            }
            Event::CandidateScored {
                candidate,
                score,
                report,
                feedback,
                failure,
            } => {
                let it = self
                    .iteration_mut(candidate.restart, candidate.iteration)
                    .filter(|it| !it.is_closed())
                    .ok_or_else(|| fail("candidate is not in an open round".into()))?;
                let c = it
                    .candidates
                    .get_mut(candidate.sample)
                    .ok_or_else(|| fail("candidate was never proposed".into()))?;
                if c.scored {
                    return Err(fail("candidate already scored".into()));
                }
                if score.is_some() && c.program_text.is_none() {
                    return Err(fail("a candidate without a program cannot have a score".into()));
                }
                if score.is_some_and(|s| !s.is_finite()) {
                    return Err(fail("score is not finite".into()));
                }
                c.score = *score;
                c.report = report.clone();
                c.feedback = Some(feedback.clone());
                c.failure = failure.clone();
                c.scored = true;
            }
            Event::IterationClosed {
                restart,
                iteration,
                best,
                carried,
            } => {
                let it = self
                    .iterations
                    .last()
                    .filter(|it| !it.is_closed() && (it.restart, it.iteration) == (*restart, *iteration))
                    .ok_or_else(|| fail("closing a round that is not open".into()))?;
                if it.candidates.len() != it.k || it.candidates.iter().any(|c| !c.scored) {
                    return Err(fail("round closed before every candidate was proposed and scored".into()));
                }
                let expected = select_best(&it.candidates);
                if *best != expected {
                    return Err(fail(format!("recorded best {best:?} differs from the best candidate {expected:?}")));
                }
                if let Some(b) = best {
                    let improves = self.eureka_best.as_ref().is_none_or(|e| b.score > e.score);
                    if improves {
                        let c = &it.candidates[b.candidate.sample];
                        self.eureka_best = Some(EurekaBest {
                            candidate: b.candidate,
                            program_text: c.program_text.clone().expect("scored candidates have programs"),
                            score: b.score,
                        });
                    }
                }
                let it = self.iterations.last_mut().expect("checked above");
                it.best = *best;
                it.carried = Some(carried.clone());
            }
            Event::FeedbackAttached {
                restart,
                iteration,
                text,
            } => {
                if self.config.evolution.mode != Mode::HumanFeedback {
                    return Err(fail("feedback applies only to human-feedback runs".into()));
                }
                if self.status != RunStatus::PausedForFeedback {
                    return Err(fail("run is not waiting for feedback".into()));
                }
                if (*restart, *iteration) != (0, self.closed_rounds()) {
                    return Err(fail(format!("feedback for round {iteration}, expected {}", self.closed_rounds())));
                }
                self.pending_feedback = Some((*restart, *iteration, text.clone()));
            }
            Event::RunFinished {
                eureka_best,
                final_evaluation,
            } => {
                if self.open_iteration().is_some() {
                    return Err(fail("run finished with an open round".into()));
                }
                if *eureka_best != self.eureka_best {
                    return Err(fail("recorded best program differs from the best scored candidate".into()));
                }
                self.final_evaluation = final_evaluation.clone();
                self.status = RunStatus::Finished;
            }
            Event::RunFailed { message } => {
                self.failure = Some(message.clone());
            }
        }
        if !matches!(env.event, Event::RunFailed { .. }) {
            self.failure = None;
        }
        self.last_seq = env.seq;
        self.status = self.derive_status();
        self.check_monotone().map_err(fail)
    }

    /// The best-so-far sequence of every restart never decreases.
    fn check_monotone(&self) -> Result<(), String> {
        for r in 0..self.config.evolution.restarts {
            let series = self.best_so_far(r);
            if series.windows(2).any(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b < a) || (w[0].is_some() && w[1].is_none())) {
                return Err(format!("best-so-far sequence of restart {r} decreases"));
            }
        }
        if let Some(e) = &self.eureka_best {
            let max = self
                .iterations
                .iter()
                .flat_map(|it| it.candidates.iter())
                .filter(|c| self.iteration(c.index.restart, c.index.iteration).is_some_and(|it| it.is_closed()))
                .filter_map(|c| c.score)
                .fold(f64::NEG_INFINITY, f64::max);
            if e.score != max {
                return Err("best program score is not the maximum over scored candidates".into());
            }
        }
        Ok(())
    }
}
