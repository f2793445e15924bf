//! Reference-based lexical baselines: BLEU, chrF and ROUGE-1/2/L.
//!
//! Word-level metrics share one tokenizer: lowercase, split on Unicode
//! whitespace, and split every non-alphanumeric character off as its own
//! token. chrF works on characters with whitespace removed.

mod bleu;
mod chrf;
mod rouge;

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::{bleu, BLEU_EPSILON};
pub use chrf::chrf;
pub use rouge::{rouge, RougeVariant};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BaselineError {
    #[error("at least one non-empty reference is required")]
    NoReferences,
    #[error("order must be at least 1")]
    InvalidOrder,
}

/// A baseline value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineScore {
    pub value: f64,
    /// Set when the hypothesis had no tokens; `value` is then 0.
    pub empty_hypothesis: bool,
}

impl BaselineScore {
    fn of(value: f64) -> Self {
        Self {
            value,
            empty_hypothesis: false,
        }
    }

    fn empty() -> Self {
        Self {
            value: 0.0,
            empty_hypothesis: true,
        }
    }
}

/// Counts of clipped n-gram matches for one order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NGramStats {
    pub order: usize,
    pub matched: usize,
    pub total: usize,
}

/// The word tokenizer shared by BLEU and ROUGE.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        for c in word.chars() {
            if c.is_alphanumeric() {
                current.extend(c.to_lowercase());
            } else {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(c.to_lowercase().collect());
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

pub(crate) fn ngram_counts<T: Eq + Hash>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n == 0 || items.len() < n {
        return counts;
    }
    for w in items.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Sum over n-grams of `min(hyp_count, ref_count)`.
pub(crate) fn clipped_overlap<T: Eq + Hash>(hyp: &HashMap<&[T], usize>, reference: &HashMap<&[T], usize>) -> usize {
    hyp.iter()
        .map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0)))
        .sum()
}

pub(crate) fn non_empty_refs(references: &[String]) -> Result<Vec<&str>, BaselineError> {
    let refs: Vec<&str> = references
        .iter()
        .map(String::as_str)
        .filter(|r| !r.trim().is_empty())
        .collect();
    if refs.is_empty() {
        Err(BaselineError::NoReferences)
    } else {
        Ok(refs)
    }
}

pub(crate) fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom <= 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}
