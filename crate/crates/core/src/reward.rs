//! Composite reward: performance, improvement over the parent, novelty
//! against the archive, latency efficiency and executability.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandbox::{ExecutionOutcome, ExecutionStatus, MetricReport};

/// Shingle length (in whitespace tokens) of the lexical novelty estimator.
pub const SHINGLE_LEN: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("time budget must be positive, got {0}")]
    InvalidBudget(f64),
    #[error("primary metric {0} outside [0, 1]")]
    MetricOutOfRange(f64),
    #[error("weights must be non-negative with at least one positive")]
    InvalidWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w_m: f64,
    pub w_i: f64,
    pub w_n: f64,
    pub w_e: f64,
    pub w_fix: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights { w_m: 0.6, w_i: 0.1, w_n: 0.1, w_e: 0.1, w_fix: 0.1 }
    }
}

impl RewardWeights {
    /// Performance only.
    pub const PERFORMANCE_ONLY: RewardWeights = RewardWeights { w_m: 1.0, w_i: 0.0, w_n: 0.0, w_e: 0.0, w_fix: 0.0 };

    pub fn as_array(&self) -> [f64; 5] {
        [self.w_m, self.w_i, self.w_n, self.w_e, self.w_fix]
    }

    pub fn from_array(w: [f64; 5]) -> Self {
        RewardWeights { w_m: w[0], w_i: w[1], w_n: w[2], w_e: w[3], w_fix: w[4] }
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        let w = self.as_array();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().all(|x| *x == 0.0) {
            return Err(RewardError::InvalidWeights);
        }
        Ok(())
    }
}

/// Per-term scores and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub performance: f64,
    pub improvement: f64,
    pub novelty: f64,
    pub efficiency: f64,
    pub debug: f64,
    pub weights: RewardWeights,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn terms(&self) -> [f64; 5] {
        [self.performance, self.improvement, self.novelty, self.efficiency, self.debug]
    }

    /// Builds a breakdown whose total is the weighted sum of `terms`.
    pub fn from_terms(terms: [f64; 5], weights: RewardWeights) -> Self {
        let w = weights.as_array();
        let total = w.iter().zip(&terms).map(|(a, b)| a * b).sum();
        RewardBreakdown {
            performance: terms[0],
            improvement: terms[1],
            novelty: terms[2],
            efficiency: terms[3],
            debug: terms[4],
            weights,
            total,
        }
    }
}

/// `1 − sqrt(min(1, tau_s / tau_max))`.
pub fn efficiency_term(tau_s: f64, tau_max: f64) -> Result<f64, RewardError> {
    if !(tau_max > 0.0 && tau_max.is_finite()) {
        return Err(RewardError::InvalidBudget(tau_max));
    }
    let tau = if tau_s.is_finite() { tau_s.max(0.0) } else { f64::INFINITY };
    Ok(1.0 - (tau / tau_max).min(1.0).sqrt())
}

/// A prior solution the candidate is compared against.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveEntry {
    pub script: String,
    pub rationale: String,
}

/// Something that can be asked for a novelty score; returns the raw reply.
pub trait NoveltyJudge: Send + Sync {
    fn judge(&self, script: &str, archive: &[ArchiveEntry]) -> Result<String, String>;
}

/// Parses a judge reply that should be a single decimal number.
/// Out-of-range values are clamped; anything else is `None`.
pub fn parse_judge_score(reply: &str) -> Option<f64> {
    let trimmed = reply.trim().trim_matches(|c| c == '`' || c == '"').trim();
    let token = trimmed.split_whitespace().next()?;
    let token = token.trim_end_matches(['.', ',', ';']);
    if trimmed.split_whitespace().count() > 1 {
        return None;
    }
    let v: f64 = token.parse().ok()?;
    v.is_finite().then(|| v.clamp(0.0, 1.0))
}

fn shingles(text: &str) -> HashSet<Vec<&str>> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.is_empty() {
        return HashSet::new();
    }
    if tokens.len() < SHINGLE_LEN {
        return HashSet::from([tokens]);
    }
    tokens.windows(SHINGLE_LEN).map(|w| w.to_vec()).collect()
}

/// Jaccard similarity of two scripts' token shingles.
pub fn shingle_similarity(a: &str, b: &str) -> f64 {
    let (sa, sb) = (shingles(a), shingles(b));
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    let inter = sa.intersection(&sb).count();
    let union = sa.len() + sb.len() - inter;
    inter as f64 / union as f64
}

/// `1 − max_archive Jaccard(shingles)`; 1 for an empty archive.
pub fn lexical_novelty(script: &str, archive: &[ArchiveEntry]) -> f64 {
    let max = archive.iter().map(|e| shingle_similarity(script, &e.script)).fold(0.0, f64::max);
    if archive.is_empty() {
        1.0
    } else {
        1.0 - max
    }
}

/// How the novelty score was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoveltySource {
    EmptyArchive,
    Judge,
    Lexical,
}

/// Novelty of `script` against `archive`. A judge reply is tried twice;
/// if neither parses, the lexical estimator is used.
pub fn novelty_term(script: &str, archive: &[ArchiveEntry], judge: Option<&dyn NoveltyJudge>) -> (f64, NoveltySource) {
    if archive.is_empty() {
        return (1.0, NoveltySource::EmptyArchive);
    }
    if let Some(judge) = judge {
        for _ in 0..2 {
            if let Ok(reply) = judge.judge(script, archive) {
                if let Some(v) = parse_judge_score(&reply) {
                    return (v, NoveltySource::Judge);
                }
            }
        }
    }
    (lexical_novelty(script, archive), NoveltySource::Lexical)
}

/// Scores one executed candidate.
pub fn compose_reward(
    metrics: Option<&MetricReport>,
    parent_performance: Option<f64>,
    outcome: &ExecutionOutcome,
    novelty: f64,
    weights: &RewardWeights,
    tau_max: f64,
) -> Result<RewardBreakdown, RewardError> {
    let succeeded = outcome.status == ExecutionStatus::Success;
    let performance = match (succeeded, metrics) {
        (true, Some(m)) => {
            if !(0.0..=1.0).contains(&m.primary_metric) {
                return Err(RewardError::MetricOutOfRange(m.primary_metric));
            }
            m.primary_metric
        }
        _ => 0.0,
    };
    let debug = if succeeded && metrics.is_some() { 1.0 } else { 0.0 };
    let improvement = parent_performance.map_or(0.0, |p| performance - p);
    let efficiency = efficiency_term(outcome.tau_s, tau_max)?;
    Ok(RewardBreakdown::from_terms(
        [performance, improvement, novelty.clamp(0.0, 1.0), efficiency, debug],
        *weights,
    ))
}
