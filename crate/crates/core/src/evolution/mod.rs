//! Evolutionary reward search.

mod config;
mod curriculum;
mod record;
mod search;

pub use config::{
    apply_human_init, Ablation, EvaluatorKind, EvolutionConfig, GeneratorConfig, GeneratorKind, Mode, RunConfig,
};
pub use curriculum::{run_curriculum, CurriculumResult, StageBSeed};
pub use record::{
    select_best, Candidate, CandidateRef, EurekaBest, Event, EventEnvelope, IterationRecord, RecordError, RunRecord,
    RunStatus, ScoredRef,
};
pub use search::{
    attach_human_feedback, build_evaluator, build_generator, resume_search, round_artifact, run_human_feedback_step, run_search, BestArtifact,
    EventSink, Evaluator, MemorySink, ScriptedEvaluator, SearchError, TrainingEvaluator, EUREKA_BEST_ARTIFACT,
};
