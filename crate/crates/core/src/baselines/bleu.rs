use super::{clipped_overlap, ngram_counts, non_empty_refs, tokenize, BaselineError, BaselineScore, NGramStats};
use std::collections::HashMap;

/// Replaces a zero clipped-match count for orders above one.
pub const BLEU_EPSILON: f64 = 1e-9;

/// Clipped n-gram statistics against multiple references.
pub(crate) fn bleu_stats(hyp: &[String], refs: &[Vec<String>], max_order: usize) -> Vec<NGramStats> {
    (1..=max_order)
        .map(|n| {
            let h = ngram_counts(hyp, n);
            // Max count of each n-gram over any single reference.
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in refs {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            NGramStats {
                order: n,
                matched: clipped_overlap(&h, &max_ref),
                total: hyp.len().saturating_sub(n - 1),
            }
        })
        .collect()
}

/// Sentence-level BLEU with brevity penalty.
///
/// Orders the hypothesis is too short to contain are left out of the
/// geometric mean. No unigram overlap gives exactly 0; zero matches at a
/// higher order are smoothed with [`BLEU_EPSILON`].
pub fn bleu(hypothesis: &str, references: &[String], max_order: usize) -> Result<BaselineScore, BaselineError> {
    if max_order == 0 {
        return Err(BaselineError::InvalidOrder);
    }
    let refs: Vec<Vec<String>> = non_empty_refs(references)?.into_iter().map(tokenize).collect();
    let hyp = tokenize(hypothesis);
    if hyp.is_empty() {
        return Ok(BaselineScore::empty());
    }
    let stats = bleu_stats(&hyp, &refs, max_order);
    if stats[0].matched == 0 {
        return Ok(BaselineScore::of(0.0));
    }
    let effective: Vec<&NGramStats> = stats.iter().filter(|s| s.total > 0).collect();
    let log_mean = effective
        .iter()
        .map(|s| {
            let m = if s.matched == 0 { BLEU_EPSILON } else { s.matched as f64 };
            (m / s.total as f64).ln()
        })
        .sum::<f64>()
        / effective.len() as f64;

    // Closest reference length, shorter wins ties.
    let c = hyp.len();
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(c);
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok(BaselineScore::of((bp * log_mean.exp()).clamp(0.0, 1.0)))
}
