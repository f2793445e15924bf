//! Meta-evaluation: how well evaluator scores track human judgments.
//!
//! Segment-level Pearson correlation per dataset and dimension, pairwise
//! ranking accuracy, and likelihood bias, plus the averages that summarise
//! them across dimensions and datasets.

mod bias;
mod correlation;
mod pairwise;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{EvaluationInstance, InstanceKey, ScoreTable};

pub use bias::{bias_from_unfairness, bias_score, unfairness_scores, BiasStats, UnfairnessMode, UNFAIRNESS_TOLERANCE};
pub use correlation::{fractional_ranks, pearson, spearman, zscores};
pub use pairwise::{pairwise_accuracy, PairGrouping, PairwiseItem, PairwiseStats, TiePolicy};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("vectors differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 paired observations, got {0}")]
    TooFewPoints(usize),
    #[error("a vector has zero variance; correlation is undefined")]
    DegenerateVariance,
    #[error("no comparable pairs")]
    NoComparablePairs,
    #[error("non-finite input")]
    NonFinite,
}

/// How segment-level correlation is pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    /// One coefficient over every (segment, system) score.
    #[default]
    Pooled,
    /// Mean of coefficients computed within each system.
    PerSystem,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaEvalConfig {
    pub tie_policy: TiePolicy,
    pub grouping: PairGrouping,
    pub correlation: CorrelationMode,
    pub unfairness: UnfairnessMode,
    /// Score column holding each instance's likelihood (expert mean token
    /// log-probability). Bias is skipped when unset.
    pub likelihood_scorer: Option<String>,
    /// Restrict cells to these score columns; every column when unset.
    pub scorers: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub dataset_id: String,
    pub dimension: String,
    pub scorer_id: String,
    /// Pearson coefficient.
    pub coefficient: f64,
    /// Spearman coefficient over the same points, when defined.
    #[serde(default)]
    pub spearman: Option<f64>,
    pub n: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub dataset_id: String,
    pub dimension: String,
    pub scorer_id: String,
    pub accuracy: f64,
    pub pairs_total: usize,
    pub pairs_tied_human: usize,
    pub pairs_tied_metric: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tie_epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasResult {
    pub dataset_id: String,
    pub dimension: String,
    pub scorer_id: String,
    pub bias: f64,
    pub n: usize,
}

/// Mean Pearson coefficient of one scorer over a set of cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageResult {
    pub scorer_id: String,
    /// A dataset id, or `"ALL"` for every cell.
    pub scope: String,
    pub mean: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetaReport {
    pub correlations: Vec<CorrelationResult>,
    pub pairwise: Vec<PairwiseResult>,
    pub bias: Vec<BiasResult>,
    pub averages: Vec<AverageResult>,
    pub warnings: Vec<String>,
    /// Instances the loaders skipped before scoring.
    pub skipped_instances: usize,
}

pub const AVERAGE_ALL: &str = "ALL";

struct Cell<'a> {
    dataset: &'a str,
    dimension: &'a str,
    scorer: &'a str,
}

#[derive(Default)]
struct CellOutcome {
    correlation: Option<CorrelationResult>,
    pairwise: Option<PairwiseResult>,
    bias: Option<BiasResult>,
    warnings: Vec<String>,
}

/// Rows of one dataset/dimension that carry a human score.
struct Row<'a> {
    key: InstanceKey,
    instance: &'a EvaluationInstance,
    human: f64,
}

fn per_system_pearson(points: &[(&str, f64, f64)]) -> Result<f64, StatsError> {
    let mut by_system: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for &(sys, m, h) in points {
        let e = by_system.entry(sys).or_default();
        e.0.push(m);
        e.1.push(h);
    }
    let coefs: Vec<f64> = by_system.values().filter_map(|(m, h)| pearson(m, h).ok()).collect();
    if coefs.is_empty() {
        return Err(StatsError::DegenerateVariance);
    }
    Ok(coefs.iter().sum::<f64>() / coefs.len() as f64)
}

fn evaluate_cell(cell: &Cell<'_>, rows: &[Row<'_>], table: &ScoreTable, config: &MetaEvalConfig) -> CellOutcome {
    let mut out = CellOutcome::default();
    let tag = format!("{}/{}/{}", cell.dataset, cell.dimension, cell.scorer);

    let mut points: Vec<(&Row<'_>, f64)> = Vec::with_capacity(rows.len());
    for r in rows {
        if let Some(s) = table.get(&r.key, cell.scorer) {
            points.push((r, s));
        }
    }
    let dropped = rows.len() - points.len();
    let metric: Vec<f64> = points.iter().map(|(_, s)| *s).collect();
    let human: Vec<f64> = points.iter().map(|(r, _)| r.human).collect();

    let coefficient = match config.correlation {
        CorrelationMode::Pooled => pearson(&metric, &human),
        CorrelationMode::PerSystem => {
            let triples: Vec<(&str, f64, f64)> = points
                .iter()
                .map(|(r, s)| (r.instance.system_id(), *s, r.human))
                .collect();
            if triples.len() < 2 {
                Err(StatsError::TooFewPoints(triples.len()))
            } else {
                per_system_pearson(&triples)
            }
        }
    };
    match coefficient {
        Ok(coefficient) => {
            out.correlation = Some(CorrelationResult {
                dataset_id: cell.dataset.to_owned(),
                dimension: cell.dimension.to_owned(),
                scorer_id: cell.scorer.to_owned(),
                coefficient,
                spearman: spearman(&metric, &human).ok(),
                n: points.len(),
                dropped,
            })
        }
        Err(e) => out.warnings.push(format!("{tag}: correlation undefined: {e}")),
    }

    let items: Vec<PairwiseItem<'_>> = points
        .iter()
        .map(|(r, s)| PairwiseItem {
            segment: r.instance.segment_id(),
            metric: *s,
            human: r.human,
        })
        .collect();
    match pairwise_accuracy(&items, config.grouping, config.tie_policy) {
        Ok(p) => {
            out.pairwise = Some(PairwiseResult {
                dataset_id: cell.dataset.to_owned(),
                dimension: cell.dimension.to_owned(),
                scorer_id: cell.scorer.to_owned(),
                accuracy: p.accuracy,
                pairs_total: p.pairs_total,
                pairs_tied_human: p.pairs_tied_human,
                pairs_tied_metric: p.pairs_tied_metric,
                tie_epsilon: p.tie_epsilon,
            })
        }
        Err(e) => out.warnings.push(format!("{tag}: pairwise accuracy undefined: {e}")),
    }

    if let Some(ls_id) = &config.likelihood_scorer {
        let mut ls = Vec::new();
        let mut m = Vec::new();
        let mut h = Vec::new();
        for (r, s) in &points {
            if let Some(l) = table.get(&r.key, ls_id) {
                ls.push(l);
                m.push(*s);
                h.push(r.human);
            }
        }
        match bias_score(&ls, &m, &h, config.unfairness) {
            Ok(b) => {
                out.bias = Some(BiasResult {
                    dataset_id: cell.dataset.to_owned(),
                    dimension: cell.dimension.to_owned(),
                    scorer_id: cell.scorer.to_owned(),
                    bias: b.bias,
                    n: b.n,
                })
            }
            Err(e) => out.warnings.push(format!("{tag}: bias undefined: {e}")),
        }
    }
    out
}

fn averages(correlations: &[CorrelationResult]) -> Vec<AverageResult> {
    let mut acc: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for c in correlations {
        for scope in [c.dataset_id.as_str(), AVERAGE_ALL] {
            let e = acc.entry((c.scorer_id.clone(), scope.to_owned())).or_insert((0.0, 0));
            e.0 += c.coefficient;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|((scorer_id, scope), (sum, cells))| AverageResult {
            scorer_id,
            scope,
            mean: sum / cells as f64,
            cells,
        })
        .collect()
}

/// Runs every statistic for every (dataset, dimension, scorer) cell.
///
/// Degenerate cells become warnings; the rest of the report is unaffected.
/// Output order is sorted and independent of thread scheduling.
pub fn evaluate(instances: &[EvaluationInstance], table: &ScoreTable, config: &MetaEvalConfig) -> MetaReport {
    let mut by_dim: BTreeMap<(&str, &str), Vec<Row<'_>>> = BTreeMap::new();
    for inst in instances {
        for (dim, &human) in inst.human_scores() {
            by_dim.entry((inst.dataset_id(), dim.as_str())).or_default().push(Row {
                key: inst.key(),
                instance: inst,
                human,
            });
        }
    }
    for rows in by_dim.values_mut() {
        rows.sort_by(|a, b| a.key.cmp(&b.key));
    }

    let scorers: BTreeSet<String> = table
        .scorer_ids()
        .into_iter()
        .filter(|id| config.scorers.as_ref().is_none_or(|only| only.contains(id)))
        .collect();
    let cells: Vec<(Cell<'_>, &[Row<'_>])> = by_dim
        .iter()
        .flat_map(|(&(dataset, dimension), rows)| {
            scorers.iter().map(move |scorer| {
                (
                    Cell {
                        dataset,
                        dimension,
                        scorer,
                    },
                    rows.as_slice(),
                )
            })
        })
        .collect();

    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|(cell, rows)| evaluate_cell(cell, rows, table, config))
        .collect();

    let mut report = MetaReport::default();
    for o in outcomes {
        report.correlations.extend(o.correlation);
        report.pairwise.extend(o.pairwise);
        report.bias.extend(o.bias);
        report.warnings.extend(o.warnings);
    }
    report.averages = averages(&report.correlations);
    report
}
