use serde::{Deserialize, Serialize};

use super::{EnvError, StepEvent, Transition};

/// Episode-level task score form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitnessKind {
    /// Number of steps survived without failure.
    Duration,
    /// Mean of `-dist` over the episode.
    NegDistance,
    /// 1 if `dist < threshold` at any step, else 0.
    Indicator { threshold: f64 },
    /// Longest run of waypoint attainments not broken by a miss.
    ConsecutiveSuccesses { threshold: f64 },
}

/// Streaming accumulator for one episode's fitness.
#[derive(Debug, Clone)]
pub struct FitnessTracker {
    kind: FitnessKind,
    steps: usize,
    failed: usize,
    neg_dist_sum: f64,
    hit: bool,
    streak: usize,
    best_streak: usize,
}

impl FitnessTracker {
    pub fn new(kind: FitnessKind) -> Self {
        Self {
            kind,
            steps: 0,
            failed: 0,
            neg_dist_sum: 0.0,
            hit: false,
            streak: 0,
            best_streak: 0,
        }
    }

    pub fn record(&mut self, dist: f64, failed: bool, event: StepEvent) {
        self.steps += 1;
        if failed {
            self.failed += 1;
        }
        self.neg_dist_sum -= dist;
        if let FitnessKind::Indicator { threshold } = self.kind {
            self.hit |= dist < threshold;
        }
        match event {
            StepEvent::Reached => {
                self.streak += 1;
                self.best_streak = self.best_streak.max(self.streak);
            }
            StepEvent::Missed => self.streak = 0,
            StepEvent::None => {}
        }
    }

    /// Per-step contribution recorded on a transition.
    pub fn increment(kind: FitnessKind, dist: f64, failed: bool, event: StepEvent) -> f64 {
        match kind {
            FitnessKind::Duration => f64::from(u8::from(!failed)),
            FitnessKind::NegDistance => -dist,
            FitnessKind::Indicator { threshold } => f64::from(u8::from(dist < threshold)),
            FitnessKind::ConsecutiveSuccesses { .. } => f64::from(u8::from(event == StepEvent::Reached)),
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn value(&self) -> f64 {
        match self.kind {
            FitnessKind::Duration => (self.steps - self.failed) as f64,
            FitnessKind::NegDistance => {
                if self.steps == 0 {
                    0.0
                } else {
                    self.neg_dist_sum / self.steps as f64
                }
            }
            FitnessKind::Indicator { .. } => f64::from(u8::from(self.hit)),
            FitnessKind::ConsecutiveSuccesses { .. } => self.best_streak as f64,
        }
    }
}

/// Fitness of one recorded episode.
pub fn compute_fitness(transitions: &[Transition], kind: FitnessKind) -> Result<f64, EnvError> {
    if transitions.is_empty() {
        return Err(EnvError::EmptyEpisode);
    }
    let mut tracker = FitnessTracker::new(kind);
    for t in transitions {
        tracker.record(t.dist_after(), t.failed, t.event);
    }
    Ok(tracker.value())
}
