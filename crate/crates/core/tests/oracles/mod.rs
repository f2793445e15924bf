//! Naive reference implementations and shared helpers for the test suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sample covariance over the product of sample standard deviations.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..n {
        cov += (xs[i] - mx) * (ys[i] - my);
        vx += (xs[i] - mx) * (xs[i] - mx);
        vy += (ys[i] - my) * (ys[i] - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    let sx = (vx / (nf - 1.0)).sqrt();
    let sy = (vy / (nf - 1.0)).sqrt();
    Some(cov / (nf - 1.0) / (sx * sy))
}

/// Average ranks by counting: rank = 1 + #smaller + (#equal - 1) / 2.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|x| {
            let less = xs.iter().filter(|y| *y < x).count() as f64;
            let equal = xs.iter().filter(|y| *y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    pearson(&ranks(xs), &ranks(ys))
}

/// Population z-scores.
pub fn zscores(xs: &[f64]) -> Option<Vec<f64>> {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 {
        return None;
    }
    Some(xs.iter().map(|x| (x - m) / sd).collect())
}

pub fn bias(ls: &[f64], metric: &[f64], human: &[f64], absolute: bool) -> Option<f64> {
    let zm = zscores(metric)?;
    let zh = zscores(human)?;
    let us: Vec<f64> = zm
        .iter()
        .zip(&zh)
        .map(|(m, h)| if absolute { (m - h).abs() } else { m - h })
        .collect();
    let lo = us.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = us.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-9 {
        return None;
    }
    spearman(ls, &us)
}

/// Every compared pair as (metric delta, human delta).
pub fn pairs(segments: &[&str], metric: &[f64], human: &[f64], within_segment: bool) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 0..metric.len() {
        for j in i + 1..metric.len() {
            if within_segment && segments[i] != segments[j] {
                continue;
            }
            out.push((metric[i] - metric[j], human[i] - human[j]));
        }
    }
    out
}

/// Human ties excluded; metric ties on untied human pairs are wrong.
pub fn accuracy_excluding_ties(pairs: &[(f64, f64)]) -> Option<f64> {
    let mut seen = 0usize;
    let mut correct = 0usize;
    for &(m, h) in pairs {
        if h == 0.0 {
            continue;
        }
        seen += 1;
        if (m > 0.0 && h > 0.0) || (m < 0.0 && h < 0.0) {
            correct += 1;
        }
    }
    (seen > 0).then(|| correct as f64 / seen as f64)
}

/// Tries every threshold in {0} ∪ {|Δm|}; a metric tie is |Δm| <= ε and is
/// correct only on a human tie. Returns (best accuracy, smallest ε).
pub fn accuracy_tie_calibrated(pairs: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pairs.is_empty() {
        return None;
    }
    let mut candidates: Vec<f64> = pairs.iter().map(|(m, _)| m.abs()).collect();
    candidates.push(0.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best: Option<(f64, f64)> = None;
    for eps in candidates {
        let correct = pairs
            .iter()
            .filter(|&&(m, h)| {
                if m.abs() <= eps {
                    h == 0.0
                } else {
                    (m > 0.0 && h > 0.0) || (m < 0.0 && h < 0.0)
                }
            })
            .count();
        let acc = correct as f64 / pairs.len() as f64;
        if best.is_none_or(|(b, _)| acc > b) {
            best = Some((acc, eps));
        }
    }
    best
}

pub fn log10_mean(probs: &[f64], floor: f64) -> f64 {
    probs.iter().map(|p| p.max(floor).log10()).sum::<f64>() / probs.len() as f64
}

/// Random vectors with a controllable share of repeated values.
pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, tie_prone: bool) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if tie_prone {
                rng.random_range(0..5) as f64
            } else {
                rng.random::<f64>() * 10.0 - 5.0
            }
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Published per-token contrast rows of the zh-en case-study segment.
pub const CASE_STUDY_CONTRAST: [&[f64]; 3] = [
    &[0.2471, 0.6758, 0.8945, 0.02881, 0.8789, 0.6953, 0.8984, 0.006134],
    &[0.2471, 0.6758, 0.8945, 0.02881, 0.8789, 0.6953, 0.8984, 0.002808],
    &[0.005951, 0.000168, 0.2754, 4.268e-05, 0.001602, 0.004944],
];

/// Published (expert, amateur, contrast) mean log10 per hypothesis.
pub const CASE_STUDY_MEANS: [(f64, f64, f64); 3] = [
    (-0.717, -1.319, -0.605),
    (-0.618, -1.701, -0.647),
    (-2.668, -4.294, -2.672),
];

pub fn fixtures_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Mean (or summed) floored log of |p_E - gamma p_A|, one term at a time.
pub fn contrast(expert: &[f64], amateur: &[f64], gamma: f64, floor: f64, mean: bool) -> f64 {
    let mut total = 0.0;
    for i in 0..expert.len() {
        let d = expert[i] - gamma * amateur[i];
        total += d.abs().max(floor).log10();
    }
    if mean {
        total / expert.len() as f64
    } else {
        total
    }
}

pub fn ensemble(expert: &[f64], amateur: &[f64], gamma: f64, floor: f64) -> f64 {
    let mixed: Vec<f64> = expert
        .iter()
        .zip(amateur)
        .map(|(e, a)| gamma * e + (1.0 - gamma) * a)
        .collect();
    log10_mean(&mixed, floor)
}

/// In-head tokens score log(p_E / p_A); the rest score log10(floor).
pub fn cd(expert: &[f64], amateur: &[f64], ids: &[u32], heads: &[Vec<u32>], k: usize, floor: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..expert.len() {
        let in_head = heads[i].iter().take(k).any(|&h| h == ids[i]);
        total += if in_head {
            expert[i].max(floor).log10() - amateur[i].max(floor).log10()
        } else {
            floor.log10()
        };
    }
    total / expert.len() as f64
}

pub fn division(expert: &[f64], amateur: &[f64], floor: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..expert.len() {
        total += expert[i].max(floor).log10() - amateur[i].max(floor).log10();
    }
    total / expert.len() as f64
}

/// Distinct (segments, systems) of an instance list.
pub fn grid_size(instances: &[contrastscore::EvaluationInstance]) -> (usize, usize) {
    let segs: std::collections::BTreeSet<&str> = instances.iter().map(|i| i.segment_id()).collect();
    let systems: std::collections::BTreeSet<&str> = instances.iter().map(|i| i.system_id()).collect();
    (segs.len(), systems.len())
}

/// Expected full-corpus shapes: MQM22 language pair to (segments, systems).
pub const MQM22_GRIDS: [(&str, &str, usize); 3] = [("en", "de", 1315), ("zh", "en", 1875), ("en", "ru", 1315)];
pub const MQM22_SYSTEMS: usize = 15;
pub const SUMMEVAL_INSTANCES: usize = 1600;
pub const QAGS_INSTANCES: usize = 239;

/// Directory holding real corpus manifests, if configured.
pub const CORPORA_ENV: &str = "CONTRASTSCORE_CORPORA";

/// Median over `trials` of wall(2N timed samples) / wall(N timed samples)
/// for a contrast scorer at batch 16.
pub fn bench_doubling_ratio(timed: usize, trials: usize) -> f64 {
    use contrastscore::bench::{run_bench_rounds, Workload};
    let warm = 2 * 16;
    let small = Workload::synthetic(warm + timed, 64, 0.5);
    let large = Workload::synthetic(warm + 2 * timed, 64, 0.5);
    let specs = [contrastscore::ScorerSpec::contrast(0.1)];
    let mut ratios: Vec<f64> = (0..trials)
        .map(|_| {
            let a = run_bench_rounds(&small, &specs, 16, 2, 3).unwrap().results[0].wall_time;
            let b = run_bench_rounds(&large, &specs, 16, 2, 3).unwrap().results[0].wall_time;
            b / a
        })
        .collect();
    ratios.sort_by(f64::total_cmp);
    ratios[trials / 2]
}
