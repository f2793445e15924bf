//! Per-token comparison of expert, amateur and contrast probabilities for
//! all hypotheses of one segment, with ranks by mean log-probability.

use serde::Serialize;

use crate::scorer_spec::{ScorerSpec, Weighting};
use crate::scorers::{contrast_score, single_score};
use crate::types::{AlignedPair, InstanceKey, Role};

#[derive(Debug, thiserror::Error)]
pub enum CaseStudyError {
    #[error("no token probabilities for segment {dataset_id}/{segment_id}")]
    UnknownInstance { dataset_id: String, segment_id: String },
    #[error("case study needs a contrast scorer, got {0}")]
    NotContrast(String),
    #[error(transparent)]
    Invariant(#[from] crate::types::InvariantError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisBreakdown {
    pub key: InstanceKey,
    pub tokens: Vec<String>,
    pub expert: Vec<f64>,
    pub amateur: Vec<f64>,
    pub contrast: Vec<f64>,
    pub expert_mean_log: f64,
    pub amateur_mean_log: f64,
    pub contrast_mean_log: f64,
    pub expert_rank: usize,
    pub amateur_rank: usize,
    pub contrast_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseStudy {
    pub dataset_id: String,
    pub segment_id: String,
    pub scorer_id: String,
    pub hypotheses: Vec<HypothesisBreakdown>,
}

/// 1-based ranks, highest score first. Ties share the better rank.
pub fn ranks_desc(scores: &[f64]) -> Vec<usize> {
    scores
        .iter()
        .map(|s| 1 + scores.iter().filter(|o| *o > s).count())
        .collect()
}

/// Builds the comparison for every pair whose dataset and segment match
/// `key`; the system id of `key` is ignored. Weighting is forced to mean.
pub fn case_study<'a>(
    pairs: impl IntoIterator<Item = &'a AlignedPair>,
    key: &InstanceKey,
    spec: &ScorerSpec,
) -> Result<CaseStudy, CaseStudyError> {
    if spec.kind != crate::ScorerKind::Contrast {
        return Err(CaseStudyError::NotContrast(spec.id()));
    }
    spec.validate()?;
    let spec = spec.clone().with_weighting(Weighting::Mean);
    let single = |role| {
        ScorerSpec::single(role)
            .with_base(spec.log_base)
            .with_floor(spec.prob_floor)
    };
    let (exp_spec, ama_spec) = (single(Role::Expert), single(Role::Amateur));

    let mut selected: Vec<&AlignedPair> = pairs
        .into_iter()
        .filter(|p| p.key().dataset_id == key.dataset_id && p.key().segment_id == key.segment_id)
        .collect();
    if selected.is_empty() {
        return Err(CaseStudyError::UnknownInstance {
            dataset_id: key.dataset_id.clone(),
            segment_id: key.segment_id.clone(),
        });
    }
    selected.sort_by(|a, b| a.key().cmp(b.key()));

    let mut hypotheses: Vec<HypothesisBreakdown> = selected
        .iter()
        .map(|pair| {
            let (contrast_mean_log, terms) = contrast_score(pair, &spec);
            HypothesisBreakdown {
                key: pair.key().clone(),
                tokens: pair.expert().tokens().iter().map(|t| t.text.clone()).collect(),
                expert: pair.expert().probs().collect(),
                amateur: pair.amateur().probs().collect(),
                contrast: terms.per_token.iter().map(|t| t.combined_prob).collect(),
                expert_mean_log: single_score(pair.expert(), &exp_spec),
                amateur_mean_log: single_score(pair.amateur(), &ama_spec),
                contrast_mean_log,
                expert_rank: 0,
                amateur_rank: 0,
                contrast_rank: 0,
            }
        })
        .collect();
    let column = |f: fn(&HypothesisBreakdown) -> f64, h: &[HypothesisBreakdown]| {
        ranks_desc(&h.iter().map(f).collect::<Vec<_>>())
    };
    let er = column(|h| h.expert_mean_log, &hypotheses);
    let ar = column(|h| h.amateur_mean_log, &hypotheses);
    let cr = column(|h| h.contrast_mean_log, &hypotheses);
    for (i, h) in hypotheses.iter_mut().enumerate() {
        h.expert_rank = er[i];
        h.amateur_rank = ar[i];
        h.contrast_rank = cr[i];
    }
    Ok(CaseStudy {
        dataset_id: key.dataset_id.clone(),
        segment_id: key.segment_id.clone(),
        scorer_id: spec.id(),
        hypotheses,
    })
}
