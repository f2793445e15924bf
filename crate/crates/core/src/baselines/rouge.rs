use serde::{Deserialize, Serialize};

use super::{clipped_overlap, f_beta, ngram_counts, non_empty_refs, tokenize, BaselineError, BaselineScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RougeVariant {
    R1,
    R2,
    #[serde(rename = "rl")]
    RL,
}

impl std::str::FromStr for RougeVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "r1" | "rouge1" => Ok(RougeVariant::R1),
            "r2" | "rouge2" => Ok(RougeVariant::R2),
            "rl" | "rougel" => Ok(RougeVariant::RL),
            other => Err(format!("unknown ROUGE variant `{other}`")),
        }
    }
}

pub(crate) fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn rouge_single(hyp: &[String], reference: &[String], variant: RougeVariant) -> f64 {
    let (overlap, h_total, r_total) = match variant {
        RougeVariant::R1 | RougeVariant::R2 => {
            let n = if variant == RougeVariant::R1 { 1 } else { 2 };
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            (
                clipped_overlap(&h, &r),
                h.values().sum::<usize>(),
                r.values().sum::<usize>(),
            )
        }
        RougeVariant::RL => (lcs_len(hyp, reference), hyp.len(), reference.len()),
    };
    if h_total == 0 || r_total == 0 {
        return 0.0;
    }
    f_beta(overlap as f64 / h_total as f64, overlap as f64 / r_total as f64, 1.0)
}

/// ROUGE F1 (n-gram overlap or LCS); best reference wins.
pub fn rouge(hypothesis: &str, references: &[String], variant: RougeVariant) -> Result<BaselineScore, BaselineError> {
    let refs = non_empty_refs(references)?;
    let hyp = tokenize(hypothesis);
    if hyp.is_empty() {
        return Ok(BaselineScore::empty());
    }
    let best = refs
        .into_iter()
        .map(|r| rouge_single(&hyp, &tokenize(r), variant))
        .fold(0.0, f64::max);
    Ok(BaselineScore::of(best))
}
