//! Scoring throughput in samples per second.
//!
//! By default only the scoring core is timed. [`Workload::EndToEnd`] also
//! times parsing of interchange lines and alignment checks.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::provider::mock_generate;
use crate::scorer_spec::ScorerSpec;
use crate::scorers::{score_pair, ScoreError};
use crate::types::{validate_alignment, AlignedPair, ScoreTable, TokenProbRecord};

pub const DEFAULT_WARMUP_BATCHES: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(
        "workload of {samples} samples is too small for {warmup} warmup batches plus one timed batch of {batch_size}"
    )]
    InsufficientWorkload {
        samples: usize,
        batch_size: usize,
        warmup: usize,
    },
    #[error("batch size must be positive")]
    BatchSize,
    #[error("no scorer specs given")]
    NoScorers,
    #[error("scorer {scorer}: {source}")]
    Score {
        scorer: String,
        #[source]
        source: ScoreError,
    },
    #[error("end-to-end record {index}: {message}")]
    Record { index: usize, message: String },
}

pub enum Workload {
    /// Pre-aligned pairs; only scoring is timed.
    Pairs(Vec<AlignedPair>),
    /// (expert, amateur) interchange lines; parsing and alignment are timed too.
    EndToEnd(Vec<(String, String)>),
}

impl Workload {
    pub fn len(&self) -> usize {
        match self {
            Workload::Pairs(p) => p.len(),
            Workload::EndToEnd(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mock pairs with keys `mock/<seed>/mock` for seeds `0..samples`.
    pub fn synthetic(samples: usize, length: usize, roughness: f64) -> Self {
        Workload::Pairs(
            (0..samples as u64)
                .map(|s| mock_generate(s, length, roughness))
                .collect(),
        )
    }

    /// Serialises a pair workload into interchange lines.
    pub fn into_end_to_end(self) -> Self {
        match self {
            Workload::Pairs(pairs) => Workload::EndToEnd(
                pairs
                    .iter()
                    .map(|p| {
                        let line = |role| {
                            serde_json::to_string(&TokenProbRecord::from_sequence(p.key(), p.sequence(role)))
                                .expect("record serializes")
                        };
                        (line(crate::Role::Expert), line(crate::Role::Amateur))
                    })
                    .collect(),
            ),
            w => w,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub scorer_id: String,
    pub samples_per_second: f64,
    pub batch_size: usize,
    /// Seconds spent on timed (post-warmup) batches.
    pub wall_time: f64,
    pub sample_count: usize,
    pub warmup_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRatio {
    pub scorer_id: String,
    pub baseline_id: String,
    /// Throughput of `scorer_id` over throughput of `baseline_id`.
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub results: Vec<BenchResult>,
    /// Every result against the first spec.
    pub ratios: Vec<BenchRatio>,
    /// Scores produced while benchmarking.
    pub scores: ScoreTable,
}

fn parse_pair(index: usize, expert: &str, amateur: &str) -> Result<AlignedPair, BenchError> {
    let err = |message: String| BenchError::Record { index, message };
    let parse = |line: &str| -> Result<_, BenchError> {
        serde_json::from_str::<TokenProbRecord>(line)
            .map_err(|e| err(e.to_string()))?
            .into_sequence()
            .map_err(|e| err(e.to_string()))
    };
    let (key, e) = parse(expert)?;
    let (_, a) = parse(amateur)?;
    validate_alignment(key, e, a).map_err(|e| err(e.to_string()))
}

fn run_batch(
    workload: &Workload,
    range: std::ops::Range<usize>,
    spec: &ScorerSpec,
    scores: &mut ScoreTable,
) -> Result<(), BenchError> {
    let id = spec.id();
    let mut score = |pair: &AlignedPair| -> Result<(), BenchError> {
        let s = score_pair(pair, spec).map_err(|source| BenchError::Score {
            scorer: id.clone(),
            source,
        })?;
        // Non-finite scores cannot occur for valid specs; ignore the
        // table's rejection rather than abort a timing run.
        let _ = scores.insert(pair.key().clone(), &id, s);
        Ok(())
    };
    match workload {
        Workload::Pairs(pairs) => pairs[range].iter().try_for_each(&mut score),
        Workload::EndToEnd(lines) => range
            .map(|i| parse_pair(i, &lines[i].0, &lines[i].1))
            .try_for_each(|p| score(&p?)),
    }
}

/// Times each spec over the workload in batches of `batch_size`.
///
/// The first `warmup` batches per spec are scored but not timed. Timed
/// passes run over `rounds` rounds with the spec order reversed on odd
/// rounds, and wall time accumulates across rounds.
pub fn run_bench_rounds(
    workload: &Workload,
    specs: &[ScorerSpec],
    batch_size: usize,
    warmup: usize,
    rounds: usize,
) -> Result<BenchReport, BenchError> {
    if batch_size == 0 {
        return Err(BenchError::BatchSize);
    }
    if specs.is_empty() {
        return Err(BenchError::NoScorers);
    }
    let samples = workload.len();
    if samples < (warmup + 1) * batch_size {
        return Err(BenchError::InsufficientWorkload {
            samples,
            batch_size,
            warmup,
        });
    }
    for spec in specs {
        spec.validate().map_err(|e| BenchError::Score {
            scorer: spec.id(),
            source: e.into(),
        })?;
    }
    let warm_end = warmup * batch_size;
    let mut scores = ScoreTable::new();
    let mut elapsed = vec![Duration::ZERO; specs.len()];
    let mut counted = vec![0usize; specs.len()];

    for spec in specs {
        for start in (0..warm_end).step_by(batch_size) {
            run_batch(workload, start..start + batch_size, spec, &mut scores)?;
        }
    }
    for round in 0..rounds.max(1) {
        let order: Vec<usize> = if round % 2 == 0 {
            (0..specs.len()).collect()
        } else {
            (0..specs.len()).rev().collect()
        };
        for i in order {
            let mut start = warm_end;
            while start < samples {
                let end = (start + batch_size).min(samples);
                let t0 = Instant::now();
                run_batch(workload, start..end, &specs[i], &mut scores)?;
                elapsed[i] += t0.elapsed();
                counted[i] += end - start;
                start = end;
            }
        }
    }

    let results: Vec<BenchResult> = specs
        .iter()
        .zip(elapsed.iter().zip(&counted))
        .map(|(spec, (t, &n))| {
            // Guard against a clock that did not advance.
            let wall_time = t.as_secs_f64().max(1e-9);
            BenchResult {
                scorer_id: spec.id(),
                samples_per_second: n as f64 / wall_time,
                batch_size,
                wall_time,
                sample_count: n,
                warmup_count: warm_end,
            }
        })
        .collect();
    let base = &results[0];
    let ratios = results
        .iter()
        .map(|r| BenchRatio {
            scorer_id: r.scorer_id.clone(),
            baseline_id: base.scorer_id.clone(),
            ratio: r.samples_per_second / base.samples_per_second,
        })
        .collect();
    Ok(BenchReport {
        results,
        ratios,
        scores,
    })
}

/// [`run_bench_rounds`] with a single timed round.
pub fn run_bench(
    workload: &Workload,
    specs: &[ScorerSpec],
    batch_size: usize,
    warmup: usize,
) -> Result<BenchReport, BenchError> {
    run_bench_rounds(workload, specs, batch_size, warmup, 1)
}
