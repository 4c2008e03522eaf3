//! Evaluation arithmetic: normalized scores, correlation, aggregate statistics.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::RewardProgram;
use crate::env::FrameTransition;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("normalized score is undefined when the human and sparse scores are equal ({0})")]
    EqualAnchors(f64),
    #[error("correlation is undefined for a constant series")]
    ConstantSeries,
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("paired series differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite input")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub method: f64,
    pub sparse: f64,
    pub human: f64,
}

/// `(method - sparse) / |human - sparse|`, unclipped.
pub fn human_normalized_score(t: ScoreTriple) -> Result<f64, MetricError> {
    if t.human == t.sparse {
        return Err(MetricError::EqualAnchors(t.human));
    }
    Ok((t.method - t.sparse) / (t.human - t.sparse).abs())
}

/// Clamp a normalized score to [0, 3] before averaging across tasks.
pub fn clip_for_aggregate(score: f64) -> f64 {
    score.clamp(0.0, 3.0)
}

pub fn pearson_correlation(candidate: &[f64], reference: &[f64]) -> Result<f64, MetricError> {
    if candidate.len() != reference.len() {
        return Err(MetricError::LengthMismatch(candidate.len(), reference.len()));
    }
    if candidate.len() < 2 {
        return Err(MetricError::TooFew {
            needed: 2,
            got: candidate.len(),
        });
    }
    if candidate.iter().chain(reference).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let n = candidate.len() as f64;
    let mx = candidate.iter().sum::<f64>() / n;
    let my = reference.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in candidate.iter().zip(reference) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::ConstantSeries);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation of two reward programs' per-step totals over the same
/// transitions, each evaluated on the post-step frame.
pub fn reward_correlation(
    candidate: &RewardProgram,
    reference: &RewardProgram,
    transitions: &[FrameTransition],
) -> Result<f64, MetricError> {
    let totals = |p: &RewardProgram| {
        let mut out = vec![0.0; p.len()];
        transitions.iter().map(|t| p.evaluate_into(&t.after, &mut out)).collect::<Vec<f64>>()
    };
    pearson_correlation(&totals(candidate), &totals(reference))
}

/// Interquartile mean: drop the lowest and highest quarter, average the rest.
///
/// When the length is not a multiple of four the boundary values are
/// weighted fractionally, so the result is the mean of the middle half of
/// the empirical distribution.
pub fn iqm(scores: &[f64]) -> Result<f64, MetricError> {
    if scores.len() < 4 {
        return Err(MetricError::TooFew {
            needed: 4,
            got: scores.len(),
        });
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let (lo, hi) = (n / 4.0, 3.0 * n / 4.0);
    let mut total = 0.0;
    for (i, x) in v.iter().enumerate() {
        let (a, b) = (i as f64, i as f64 + 1.0);
        let w = (b.min(hi) - a.max(lo)).max(0.0);
        total += w * x;
    }
    Ok(total / (hi - lo))
}

/// Probability that a draw from `x` beats a draw from `y`, ties counting half.
pub fn prob_improvement(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.is_empty() || y.is_empty() {
        return Err(MetricError::TooFew {
            needed: 1,
            got: x.len().min(y.len()),
        });
    }
    let mut total = 0.0;
    for a in x {
        for b in y {
            if a > b {
                total += 1.0;
            } else if a == b {
                total += 0.5;
            }
        }
    }
    Ok(total / (x.len() * y.len()) as f64)
}

/// Percentile bootstrap confidence interval for `statistic`.
pub fn bootstrap_ci<F>(
    scores: &[f64],
    statistic: F,
    level: f64,
    resamples: usize,
    seed: u64,
) -> Result<(f64, f64), MetricError>
where
    F: Fn(&[f64]) -> f64,
{
    if scores.len() < 2 {
        return Err(MetricError::TooFew {
            needed: 2,
            got: scores.len(),
        });
    }
    if resamples == 0 {
        return Err(MetricError::TooFew { needed: 1, got: 0 });
    }
    let mut rng = rng::stream(seed, &[0xB007]);
    let mut buf = vec![0.0; scores.len()];
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = scores[rng.random_range(0..scores.len())];
            }
            statistic(&buf)
        })
        .collect();
    if stats.iter().any(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level.clamp(0.0, 1.0)) / 2.0;
    Ok((quantile(&stats, alpha), quantile(&stats, 1.0 - alpha)))
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
