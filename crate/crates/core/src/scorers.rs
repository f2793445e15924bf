//! Scoring formulas over aligned expert/amateur token probabilities.
//!
//! Every scorer reduces a hypothesis to per-token log terms and aggregates
//! them left to right with compensated summation. Logs are taken in natural
//! base and rescaled at the end, so `score_base10 == score_natural / ln 10`.
//! A probability floor inside every log keeps scores finite.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::scorer_spec::{LogBase, ScorerKind, ScorerSpec, Weighting};
use crate::types::{AlignedPair, InstanceKey, InvariantError, ScoreTable, TokenProbSequence};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("cd_score needs expert top-k sets, missing at position {position}")]
    MissingTopK { position: usize },
    #[error("invalid scorer: {0}")]
    InvalidSpec(#[from] InvariantError),
    #[error("score is not finite")]
    NonFinite,
}

/// Neumaier-compensated running sum. Order of `add` calls is the order of
/// evaluation, which keeps results bit-stable for a fixed input.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// One position of a scored hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenTerm {
    pub position: usize,
    /// The probability (or ratio, for cd/division) fed into the log.
    pub combined_prob: f64,
    /// Log term in the scorer's base.
    pub log_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenScoreBreakdown {
    pub per_token: Vec<TokenTerm>,
    pub total: f64,
}

impl TokenScoreBreakdown {
    /// Re-aggregates the per-token log terms under `weighting`.
    pub fn reaggregate(&self, weighting: Weighting) -> f64 {
        let sum: CompensatedSum = self.per_token.iter().map(|t| t.log_term).collect();
        match weighting {
            Weighting::Sum => sum.value(),
            Weighting::Mean => sum.value() / self.per_token.len() as f64,
        }
    }
}

/// `|p_exp - gamma * p_ama|`.
pub fn contrast_token_prob(p_exp: f64, p_ama: f64, gamma: f64) -> f64 {
    (p_exp - gamma * p_ama).abs()
}

/// `gamma * p_exp + (1 - gamma) * p_ama`.
pub fn ensemble_token_prob(p_exp: f64, p_ama: f64, gamma: f64) -> f64 {
    gamma * p_exp + (1.0 - gamma) * p_ama
}

#[inline]
fn floored_ln(p: f64, floor: f64) -> f64 {
    p.max(floor).ln()
}

fn finish(ln_sum: CompensatedSum, count: usize, weighting: Weighting, base: LogBase) -> f64 {
    let aggregated = match weighting {
        Weighting::Sum => ln_sum.value(),
        Weighting::Mean => ln_sum.value() / count as f64,
    };
    base.from_natural(aggregated)
}

/// Aggregates natural-log terms and keeps the per-token view.
fn collect_terms(
    terms: impl Iterator<Item = (f64, f64)>,
    weighting: Weighting,
    base: LogBase,
) -> (f64, TokenScoreBreakdown) {
    let mut acc = CompensatedSum::default();
    let mut per_token = Vec::new();
    for (position, (combined_prob, ln_term)) in terms.enumerate() {
        acc.add(ln_term);
        per_token.push(TokenTerm {
            position,
            combined_prob,
            log_term: base.from_natural(ln_term),
        });
    }
    let total = finish(acc, per_token.len(), weighting, base);
    (total, TokenScoreBreakdown { per_token, total })
}

fn aggregate_probs(probs: impl Iterator<Item = f64>, spec: &ScorerSpec) -> f64 {
    let mut acc = CompensatedSum::default();
    let mut count = 0usize;
    for p in probs {
        acc.add(floored_ln(p, spec.prob_floor));
        count += 1;
    }
    finish(acc, count, spec.weighting, spec.log_base)
}

/// Mean (or summed) token log-likelihood of one sequence.
///
/// Only the weighting, base and floor of `spec` are read.
pub fn single_score(seq: &TokenProbSequence, spec: &ScorerSpec) -> f64 {
    aggregate_probs(seq.probs(), spec)
}

/// Log-likelihood of `|p_exp - gamma * p_ama|` per token.
pub fn contrast_score(pair: &AlignedPair, spec: &ScorerSpec) -> (f64, TokenScoreBreakdown) {
    let gamma = spec.gamma;
    let floor = spec.prob_floor;
    collect_terms(
        pair.prob_pairs().map(|(e, a)| {
            let p = contrast_token_prob(e, a, gamma);
            (p, floored_ln(p, floor))
        }),
        spec.weighting,
        spec.log_base,
    )
}

fn ensemble_gamma(spec: &ScorerSpec) -> f64 {
    match spec.kind {
        ScorerKind::EnsembleAvg => 0.5,
        _ => spec.gamma,
    }
}

/// Log-likelihood of the per-token mixture of expert and amateur.
///
/// `EnsembleAvg` uses an equal mixture; `EnsembleWeighted` gives the expert
/// weight `gamma`.
pub fn ensemble_score(pair: &AlignedPair, spec: &ScorerSpec) -> f64 {
    let gamma = ensemble_gamma(spec);
    aggregate_probs(pair.prob_pairs().map(|(e, a)| ensemble_token_prob(e, a, gamma)), spec)
}

fn cd_terms<'a>(pair: &'a AlignedPair, spec: &'a ScorerSpec) -> Result<Vec<(f64, f64)>, ScoreError> {
    let k = spec.top_k.unwrap_or(0);
    let floor = spec.prob_floor;
    let penalty = spec.cd_penalty_ln();
    pair.expert()
        .tokens()
        .iter()
        .zip(pair.amateur().tokens())
        .enumerate()
        .map(|(position, (e, a))| {
            let head = e.top_k.as_deref().ok_or(ScoreError::MissingTopK { position })?;
            let head = &head[..head.len().min(k)];
            if head.contains(&e.token_id) {
                let ln = floored_ln(e.prob, floor) - floored_ln(a.prob, floor);
                Ok((ln.exp(), ln))
            } else {
                Ok((0.0, penalty))
            }
        })
        .collect()
}

/// Contrastive-decoding objective restricted to the expert's top-k head.
///
/// Tokens outside the head receive a finite penalty instead of negative
/// infinity.
pub fn cd_score(pair: &AlignedPair, spec: &ScorerSpec) -> Result<f64, ScoreError> {
    let terms = cd_terms(pair, spec)?;
    let acc: CompensatedSum = terms.iter().map(|&(_, ln)| ln).collect();
    Ok(finish(acc, terms.len(), spec.weighting, spec.log_base))
}

/// Log-ratio `log p_exp - log p_ama`. Unstable when `p_ama` is near zero.
pub fn division_score(pair: &AlignedPair, spec: &ScorerSpec) -> f64 {
    let floor = spec.prob_floor;
    let acc: CompensatedSum = pair
        .prob_pairs()
        .map(|(e, a)| floored_ln(e, floor) - floored_ln(a, floor))
        .collect();
    finish(acc, pair.len(), spec.weighting, spec.log_base)
}

/// Scores a pair under any scorer kind.
pub fn score_pair(pair: &AlignedPair, spec: &ScorerSpec) -> Result<f64, ScoreError> {
    spec.validate()?;
    Ok(match spec.kind {
        ScorerKind::Single => single_score(pair.sequence(spec.role), spec),
        ScorerKind::EnsembleAvg | ScorerKind::EnsembleWeighted => ensemble_score(pair, spec),
        ScorerKind::Contrast => contrast_score(pair, spec).0,
        ScorerKind::CdScore => cd_score(pair, spec)?,
        ScorerKind::Division => division_score(pair, spec),
    })
}

/// Per-token view of any scorer; `total` equals [`score_pair`].
pub fn breakdown(pair: &AlignedPair, spec: &ScorerSpec) -> Result<TokenScoreBreakdown, ScoreError> {
    spec.validate()?;
    let floor = spec.prob_floor;
    let (w, b) = (spec.weighting, spec.log_base);
    let out = match spec.kind {
        ScorerKind::Single => {
            collect_terms(
                pair.sequence(spec.role).probs().map(|p| (p, floored_ln(p, floor))),
                w,
                b,
            )
            .1
        }
        ScorerKind::EnsembleAvg | ScorerKind::EnsembleWeighted => {
            let gamma = ensemble_gamma(spec);
            collect_terms(
                pair.prob_pairs().map(|(e, a)| {
                    let p = ensemble_token_prob(e, a, gamma);
                    (p, floored_ln(p, floor))
                }),
                w,
                b,
            )
            .1
        }
        ScorerKind::Contrast => contrast_score(pair, spec).1,
        ScorerKind::CdScore => collect_terms(cd_terms(pair, spec)?.into_iter(), w, b).1,
        ScorerKind::Division => {
            collect_terms(
                pair.prob_pairs().map(|(e, a)| {
                    let ln = floored_ln(e, floor) - floored_ln(a, floor);
                    (ln.exp(), ln)
                }),
                w,
                b,
            )
            .1
        }
    };
    Ok(out)
}

/// A scorer that could not score one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFailure {
    pub key: InstanceKey,
    pub scorer_id: String,
    pub error: ScoreError,
}

/// Scores every pair under every spec in parallel.
///
/// Results are collected in input order, so the table and the failure list
/// do not depend on the thread count.
pub fn score_pairs(pairs: &[AlignedPair], specs: &[ScorerSpec]) -> (ScoreTable, Vec<ScoreFailure>) {
    let ids: Vec<String> = specs.iter().map(ScorerSpec::id).collect();
    let rows: Vec<Vec<Result<f64, ScoreError>>> = pairs
        .par_iter()
        .map(|pair| specs.iter().map(|spec| score_pair(pair, spec)).collect())
        .collect();
    let mut table = ScoreTable::new();
    let mut failures = Vec::new();
    for (pair, row) in pairs.iter().zip(rows) {
        for (id, result) in ids.iter().zip(row) {
            match result {
                Ok(score) => {
                    if table.insert(pair.key().clone(), id, score).is_err() {
                        failures.push(ScoreFailure {
                            key: pair.key().clone(),
                            scorer_id: id.clone(),
                            error: ScoreError::NonFinite,
                        });
                    }
                }
                Err(error) => failures.push(ScoreFailure {
                    key: pair.key().clone(),
                    scorer_id: id.clone(),
                    error,
                }),
            }
        }
    }
    (table, failures)
}
