//! Metrics documents for finished runs.

use std::fmt::Write as _;

use rewardsmith_core::evolution::{BestArtifact, Evaluator, EurekaBest, RunRecord, RunStatus, TrainingEvaluator, EUREKA_BEST_ARTIFACT};
use rewardsmith_core::metrics::{
    bootstrap_ci, clip_for_aggregate, human_normalized_score, iqm, mean, prob_improvement, reward_correlation,
    ScoreTriple,
};
use rewardsmith_core::policy::FinalEvaluation;
use rewardsmith_core::store::{LoadedRun, ARTIFACT_DIR};
use serde::Serialize;

/// Five-run scores of the environment's bundled human and sparse rewards.
#[derive(Debug, Clone, Serialize)]
pub struct Baselines {
    pub human: f64,
    pub sparse: f64,
    pub normalized: Option<f64>,
    pub normalized_clipped: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub run_id: String,
    pub env: String,
    pub status: RunStatus,
    pub candidates: usize,
    pub best_per_iteration: Vec<Option<f64>>,
    pub best_so_far: Vec<Vec<Option<f64>>>,
    pub eureka_best: Option<EurekaBest>,
    pub final_evaluation: Option<FinalEvaluation>,
    /// Pearson correlation with the human reward over the best program's
    /// training transitions.
    pub correlation_with_human: Option<f64>,
    pub baselines: Option<Baselines>,
}

pub fn run_report(run: &LoadedRun, with_baselines: bool) -> RunReport {
    let record = &run.record;
    let cfg = &record.config;
    let spec = cfg.spec().ok();
    let correlation_with_human = spec.as_ref().and_then(|spec| {
        let best = record.eureka_best.as_ref()?;
        let bytes = std::fs::read(run.dir.join(ARTIFACT_DIR).join(EUREKA_BEST_ARTIFACT)).ok()?;
        let artifact: BestArtifact = serde_json::from_slice(&bytes).ok()?;
        let program = rewardsmith_core::dsl::parse_program(&best.program_text, &spec.registry).ok()?;
        reward_correlation(&program, &spec.human_program(), &artifact.transitions).ok()
    });
    let baselines = match (&spec, with_baselines) {
        (Some(spec), true) => {
            let evaluator = TrainingEvaluator {
                spec: spec.clone(),
                trainer: cfg.trainer.clone(),
            };
            let score = |p| {
                evaluator
                    .final_evaluation(&p, cfg.trainer.seed, cfg.evolution.final_runs)
                    .map(|f| f.mean_of_max)
                    .ok()
            };
            match (score(spec.human_program()), score(spec.sparse_program())) {
                (Some(human), Some(sparse)) => {
                    let normalized = record.final_evaluation.as_ref().and_then(|f| {
                        human_normalized_score(ScoreTriple {
                            method: f.mean_of_max,
                            sparse,
                            human,
                        })
                        .ok()
                    });
                    Some(Baselines {
                        human,
                        sparse,
                        normalized,
                        normalized_clipped: normalized.map(clip_for_aggregate),
                    })
                }
                _ => None,
            }
        }
        _ => None,
    };
    RunReport {
        run_id: record.run_id.clone(),
        env: cfg.env.clone(),
        status: record.status,
        candidates: record.candidate_count(),
        best_per_iteration: record.best_per_iteration().iter().map(|b| b.map(|b| b.score)).collect(),
        best_so_far: (0..cfg.evolution.restarts).map(|r| record.best_so_far(r)).collect(),
        eureka_best: record.eureka_best.clone(),
        final_evaluation: record.final_evaluation.clone(),
        correlation_with_human,
        baselines,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairwiseComparison {
    pub run_id: String,
    /// Probability that a final run of the base beats one of this run.
    pub prob_improvement: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub mean_raw: f64,
    pub mean_clipped: f64,
    pub iqm_raw: Option<f64>,
    pub iqm_clipped: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportDocument {
    pub runs: Vec<RunReport>,
    /// 95% percentile-bootstrap interval of each run's mean final fitness.
    pub final_fitness_ci: Vec<Option<(f64, f64)>>,
    pub comparisons: Vec<PairwiseComparison>,
    /// Human normalized scores across runs, when baselines were computed.
    pub normalized_aggregate: Option<Aggregate>,
}

pub fn report_document(runs: &[LoadedRun], with_baselines: bool) -> ReportDocument {
    let reports: Vec<RunReport> = runs.iter().map(|r| run_report(r, with_baselines)).collect();
    let fitness = |r: &RunReport| r.final_evaluation.as_ref().map(|f| f.run_fitness.clone());
    let final_fitness_ci = reports
        .iter()
        .map(|r| fitness(r).and_then(|v| bootstrap_ci(&v, mean, 0.95, 2000, 0).ok()))
        .collect();
    let comparisons = reports
        .iter()
        .skip(1)
        .map(|other| PairwiseComparison {
            run_id: other.run_id.clone(),
            prob_improvement: match (fitness(&reports[0]), fitness(other)) {
                (Some(a), Some(b)) => prob_improvement(&a, &b).ok(),
                _ => None,
            },
        })
        .collect();
    let normalized: Vec<f64> = reports
        .iter()
        .filter_map(|r| r.baselines.as_ref()?.normalized)
        .collect();
    let normalized_aggregate = (!normalized.is_empty()).then(|| {
        let clipped: Vec<f64> = normalized.iter().map(|&x| clip_for_aggregate(x)).collect();
        Aggregate {
            mean_raw: mean(&normalized),
            mean_clipped: mean(&clipped),
            iqm_raw: iqm(&normalized).ok(),
            iqm_clipped: iqm(&clipped).ok(),
        }
    });
    ReportDocument {
        runs: reports,
        final_fitness_ci,
        comparisons,
        normalized_aggregate,
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

pub fn render_table(doc: &ReportDocument) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<36} {:<16} {:<20} {:>6} {:>10} {:>10} {:>10} {:>8}",
        "run", "env", "status", "cands", "best", "final", "pooled", "corr"
    );
    for r in &doc.runs {
        let _ = writeln!(
            out,
            "{:<36} {:<16} {:<20} {:>6} {:>10} {:>10} {:>10} {:>8}",
            r.run_id,
            r.env,
            format!("{:?}", r.status),
            r.candidates,
            opt(r.eureka_best.as_ref().map(|b| b.score)),
            opt(r.final_evaluation.as_ref().map(|f| f.mean_of_max)),
            opt(r.final_evaluation.as_ref().map(|f| f.max_of_mean)),
            opt(r.correlation_with_human),
        );
        if let Some(b) = &r.baselines {
            let _ = writeln!(
                out,
                "  human {:.4}  sparse {:.4}  normalized {}  clipped {}",
                b.human,
                b.sparse,
                opt(b.normalized),
                opt(b.normalized_clipped)
            );
        }
    }
    for c in &doc.comparisons {
        let _ = writeln!(
            out,
            "P({} beats {}) = {}",
            doc.runs[0].run_id,
            c.run_id,
            opt(c.prob_improvement)
        );
    }
    if let Some(a) = &doc.normalized_aggregate {
        let _ = writeln!(
            out,
            "normalized score: mean {:.4} (clipped {:.4}), IQM {} (clipped {})",
            a.mean_raw,
            a.mean_clipped,
            opt(a.iqm_raw),
            opt(a.iqm_clipped)
        );
    }
    out
}

/// Best-so-far curve used by summaries: the running max over all closed rounds.
pub fn overall_best_so_far(record: &RunRecord) -> Vec<Option<f64>> {
    let mut cur: Option<f64> = None;
    record
        .best_per_iteration()
        .into_iter()
        .map(|b| {
            if let Some(b) = b {
                cur = Some(cur.map_or(b.score, |c| c.max(b.score)));
            }
            cur
        })
        .collect()
}
