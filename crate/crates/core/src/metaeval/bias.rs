use serde::{Deserialize, Serialize};

use super::correlation::{spearman, zscores};
use super::StatsError;

/// Unfairness values smaller than this are treated as exact agreement.
pub const UNFAIRNESS_TOLERANCE: f64 = 1e-9;

/// How the per-instance discrepancy between evaluator and humans is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnfairnessMode {
    /// `z(metric) - z(human)`.
    #[default]
    Signed,
    /// `|z(metric) - z(human)|`.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasStats {
    pub bias: f64,
    pub n: usize,
}

/// Standardized evaluator-minus-human discrepancy for every instance.
pub fn unfairness_scores(
    metric_scores: &[f64],
    human_scores: &[f64],
    mode: UnfairnessMode,
) -> Result<Vec<f64>, StatsError> {
    if metric_scores.len() != human_scores.len() {
        return Err(StatsError::LengthMismatch {
            left: metric_scores.len(),
            right: human_scores.len(),
        });
    }
    let zm = zscores(metric_scores)?;
    let zh = zscores(human_scores)?;
    Ok(zm
        .iter()
        .zip(&zh)
        .map(|(m, h)| match mode {
            UnfairnessMode::Signed => m - h,
            UnfairnessMode::Absolute => (m - h).abs(),
        })
        .collect())
}

/// Spearman correlation between likelihoods and unfairness values.
///
/// Unfairness that is constant up to [`UNFAIRNESS_TOLERANCE`] is reported
/// as degenerate rather than correlated against rounding noise.
pub fn bias_from_unfairness(likelihoods: &[f64], unfairness: &[f64]) -> Result<BiasStats, StatsError> {
    if let (Some(lo), Some(hi)) = (
        unfairness.iter().copied().reduce(f64::min),
        unfairness.iter().copied().reduce(f64::max),
    ) {
        if hi - lo <= UNFAIRNESS_TOLERANCE {
            return Err(StatsError::DegenerateVariance);
        }
    }
    Ok(BiasStats {
        bias: spearman(likelihoods, unfairness)?,
        n: likelihoods.len(),
    })
}

/// Likelihood bias of an evaluator: how strongly its over- or under-rating
/// relative to humans follows the model's own likelihood.
pub fn bias_score(
    likelihoods: &[f64],
    metric_scores: &[f64],
    human_scores: &[f64],
    mode: UnfairnessMode,
) -> Result<BiasStats, StatsError> {
    if likelihoods.len() != metric_scores.len() {
        return Err(StatsError::LengthMismatch {
            left: likelihoods.len(),
            right: metric_scores.len(),
        });
    }
    let us = unfairness_scores(metric_scores, human_scores, mode)?;
    bias_from_unfairness(likelihoods, &us)
}
