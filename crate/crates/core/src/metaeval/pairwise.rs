use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::StatsError;

/// Which hypotheses are compared with each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairGrouping {
    /// Only hypotheses for the same source segment.
    #[default]
    WithinSegment,
    Global,
}

/// How ties are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Human-tied pairs are dropped; a metric tie on a human-untied pair is
    /// counted as wrong.
    #[default]
    ExcludeHumanTies,
    /// All pairs count. Metric differences within a threshold are treated
    /// as ties, and the threshold is chosen to maximise accuracy. A tie is
    /// correct only when the human scores also tie.
    TieCalibrated,
}

impl std::str::FromStr for TiePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exclude_human_ties" | "exclude" => Ok(TiePolicy::ExcludeHumanTies),
            "tie_calibrated" | "calibrated" => Ok(TiePolicy::TieCalibrated),
            other => Err(format!("unknown tie policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseItem<'a> {
    pub segment: &'a str,
    pub metric: f64,
    pub human: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseStats {
    pub accuracy: f64,
    pub pairs_total: usize,
    pub pairs_tied_human: usize,
    pub pairs_tied_metric: usize,
    /// Threshold picked under [`TiePolicy::TieCalibrated`].
    pub tie_epsilon: Option<f64>,
}

/// `(metric difference, human difference)` for every compared pair.
fn pair_deltas(items: &[PairwiseItem<'_>], grouping: PairGrouping) -> Vec<(f64, f64)> {
    let mut groups: BTreeMap<&str, Vec<&PairwiseItem<'_>>> = BTreeMap::new();
    for it in items {
        let g = match grouping {
            PairGrouping::WithinSegment => it.segment,
            PairGrouping::Global => "",
        };
        groups.entry(g).or_default().push(it);
    }
    let mut out = Vec::new();
    for members in groups.values() {
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                out.push((
                    members[i].metric - members[j].metric,
                    members[i].human - members[j].human,
                ));
            }
        }
    }
    out
}

/// Fraction of hypothesis pairs the metric orders the same way as humans.
pub fn pairwise_accuracy(
    items: &[PairwiseItem<'_>],
    grouping: PairGrouping,
    tie_policy: TiePolicy,
) -> Result<PairwiseStats, StatsError> {
    if items.iter().any(|i| !(i.metric.is_finite() && i.human.is_finite())) {
        return Err(StatsError::NonFinite);
    }
    let deltas = pair_deltas(items, grouping);
    let pairs_total = deltas.len();
    let pairs_tied_human = deltas.iter().filter(|(_, h)| *h == 0.0).count();
    match tie_policy {
        TiePolicy::ExcludeHumanTies => {
            let comparable = pairs_total - pairs_tied_human;
            if comparable == 0 {
                return Err(StatsError::NoComparablePairs);
            }
            let untied = deltas.iter().filter(|(_, h)| *h != 0.0);
            let pairs_tied_metric = untied.clone().filter(|(m, _)| *m == 0.0).count();
            let correct = untied.filter(|(m, h)| *m != 0.0 && (m > &0.0) == (h > &0.0)).count();
            Ok(PairwiseStats {
                accuracy: correct as f64 / comparable as f64,
                pairs_total,
                pairs_tied_human,
                pairs_tied_metric,
                tie_epsilon: None,
            })
        }
        TiePolicy::TieCalibrated => {
            if pairs_total == 0 {
                return Err(StatsError::NoComparablePairs);
            }
            let (epsilon, correct, tied) = calibrate(&deltas);
            Ok(PairwiseStats {
                accuracy: correct as f64 / pairs_total as f64,
                pairs_total,
                pairs_tied_human,
                pairs_tied_metric: tied,
                tie_epsilon: Some(epsilon),
            })
        }
    }
}

/// Sweeps candidate thresholds in increasing order of `|metric delta|`.
/// Returns `(epsilon, correct, metric_tied)` for the smallest threshold
/// reaching the best accuracy.
fn calibrate(deltas: &[(f64, f64)]) -> (f64, usize, usize) {
    let agree = |m: f64, h: f64| h != 0.0 && m != 0.0 && (m > 0.0) == (h > 0.0);
    // (|metric delta|, human tied, correct when not metric-tied)
    let mut sweep: Vec<(f64, bool, bool)> = deltas.iter().map(|&(m, h)| (m.abs(), h == 0.0, agree(m, h))).collect();
    sweep.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut untied_correct = sweep.iter().filter(|s| s.2).count();
    let mut tied_correct = 0usize;
    let mut best = None;
    if sweep.first().is_none_or(|s| s.0 > 0.0) {
        best = Some((0.0, untied_correct, 0));
    }
    let mut i = 0;
    while i < sweep.len() {
        let eps = sweep[i].0;
        while i < sweep.len() && sweep[i].0 == eps {
            let (_, human_tied, correct_untied) = sweep[i];
            untied_correct -= usize::from(correct_untied);
            tied_correct += usize::from(human_tied);
            i += 1;
        }
        let correct = untied_correct + tied_correct;
        if best.is_none_or(|(_, c, _)| correct > c) {
            best = Some((eps, correct, i));
        }
    }
    best.unwrap_or((0.0, 0, 0))
}
