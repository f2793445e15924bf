use super::{clipped_overlap, f_beta, ngram_counts, non_empty_refs, BaselineError, BaselineScore};

fn chrf_single(hyp: &[char], reference: &[char], char_order: usize, beta: f64) -> f64 {
    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut effective = 0usize;
    for n in 1..=char_order {
        let h = ngram_counts(hyp, n);
        let r = ngram_counts(reference, n);
        let h_total: usize = h.values().sum();
        let r_total: usize = r.values().sum();
        if h_total == 0 || r_total == 0 {
            continue;
        }
        let m = clipped_overlap(&h, &r) as f64;
        precision += m / h_total as f64;
        recall += m / r_total as f64;
        effective += 1;
    }
    if effective == 0 {
        return 0.0;
    }
    f_beta(precision / effective as f64, recall / effective as f64, beta)
}

/// Character n-gram F-score, averaged over orders both sides can fill;
/// best reference wins.
pub fn chrf(
    hypothesis: &str,
    references: &[String],
    char_order: usize,
    beta: f64,
) -> Result<BaselineScore, BaselineError> {
    if char_order == 0 {
        return Err(BaselineError::InvalidOrder);
    }
    let refs = non_empty_refs(references)?;
    let strip = |s: &str| -> Vec<char> { s.chars().filter(|c| !c.is_whitespace()).collect() };
    let hyp = strip(hypothesis);
    if hyp.is_empty() {
        return Ok(BaselineScore::empty());
    }
    let best = refs
        .into_iter()
        .map(|r| chrf_single(&hyp, &strip(r), char_order, beta))
        .fold(0.0, f64::max);
    Ok(BaselineScore::of(best.clamp(0.0, 1.0)))
}
