//! Canonical data types shared across the crate.
//!
//! Every type here is immutable once constructed. Constructors and serde
//! decoding both go through the same validation, so a value that exists is
//! a value that satisfies its invariants.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Violations of a domain-type invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum InvariantError {
    #[error("token sequence is empty")]
    EmptySequence,
    #[error("temperature must be positive and finite, got {0}")]
    Temperature(f64),
    #[error("token {position}: probability {prob} is outside [0, 1]")]
    Probability { position: usize, prob: f64 },
    #[error("hypothesis is empty")]
    EmptyHypothesis,
    #[error("human score for dimension `{0}` is not finite")]
    HumanScore(String),
    #[error("gamma must lie in [0, 1], got {0}")]
    Gamma(f64),
    #[error("probability floor must be positive, got {0}")]
    ProbFloor(f64),
    #[error("top_k must be set for cd_score and only for cd_score")]
    TopK,
    #[error("score for {key} / {scorer} is not finite")]
    NonFiniteScore { key: Box<InstanceKey>, scorer: String },
}

/// Errors raised when pairing an expert stream with an amateur stream.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignmentError {
    #[error("length mismatch: expert has {expert} tokens, amateur has {amateur}")]
    LengthMismatch { expert: usize, amateur: usize },
    #[error("token mismatch at position {position}: expert id {expert}, amateur id {amateur}")]
    TokenMismatch { position: usize, expert: u32, amateur: u32 },
    #[error("tokenizer mismatch: expert `{expert}`, amateur `{amateur}`")]
    TokenizerMismatch { expert: String, amateur: String },
}

/// Which side of the contrast a sequence plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Expert,
    Amateur,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Expert => "expert",
            Role::Amateur => "amateur",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "expert" => Ok(Role::Expert),
            "amateur" => Ok(Role::Amateur),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

/// Identifies one hypothesis within a dataset/segment/system grid.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceKey {
    pub dataset_id: String,
    pub segment_id: String,
    pub system_id: String,
}

impl InstanceKey {
    pub fn new(dataset_id: impl Into<String>, segment_id: impl Into<String>, system_id: impl Into<String>) -> Self {
        Self {
            dataset_id: dataset_id.into(),
            segment_id: segment_id.into(),
            system_id: system_id.into(),
        }
    }
}

impl fmt::Display for InstanceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.dataset_id, self.segment_id, self.system_id)
    }
}

/// Probability of one hypothesis token given its prefix and the prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenProb {
    pub token_id: u32,
    pub text: String,
    pub prob: f64,
    /// Expert-side head set: the most likely token ids at this position,
    /// in descending probability. Only captured when cd_score is wanted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<Vec<u32>>,
}

impl TokenProb {
    pub fn new(token_id: u32, text: impl Into<String>, prob: f64) -> Self {
        Self {
            token_id,
            text: text.into(),
            prob,
            top_k: None,
        }
    }

    pub fn with_top_k(mut self, top_k: Vec<u32>) -> Self {
        self.top_k = Some(top_k);
        self
    }
}

#[derive(Deserialize)]
struct RawSequence {
    model_id: String,
    role: Role,
    temperature: f64,
    tokenizer_id: String,
    tokens: Vec<TokenProb>,
}

/// One model's per-token probabilities for one hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSequence")]
pub struct TokenProbSequence {
    model_id: String,
    role: Role,
    temperature: f64,
    tokenizer_id: String,
    tokens: Vec<TokenProb>,
}

impl TryFrom<RawSequence> for TokenProbSequence {
    type Error = InvariantError;

    fn try_from(raw: RawSequence) -> Result<Self, Self::Error> {
        TokenProbSequence::new(raw.model_id, raw.role, raw.temperature, raw.tokenizer_id, raw.tokens)
    }
}

impl TokenProbSequence {
    pub fn new(
        model_id: impl Into<String>,
        role: Role,
        temperature: f64,
        tokenizer_id: impl Into<String>,
        tokens: Vec<TokenProb>,
    ) -> Result<Self, InvariantError> {
        if tokens.is_empty() {
            return Err(InvariantError::EmptySequence);
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(InvariantError::Temperature(temperature));
        }
        for (position, t) in tokens.iter().enumerate() {
            if !(t.prob.is_finite() && (0.0..=1.0).contains(&t.prob)) {
                return Err(InvariantError::Probability { position, prob: t.prob });
            }
        }
        Ok(Self {
            model_id: model_id.into(),
            role,
            temperature,
            tokenizer_id: tokenizer_id.into(),
            tokens,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn tokenizer_id(&self) -> &str {
        &self.tokenizer_id
    }

    pub fn tokens(&self) -> &[TokenProb] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn probs(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.tokens.iter().map(|t| t.prob)
    }

    /// Same tokens and provenance under a different role.
    pub fn with_role(&self, role: Role) -> Self {
        Self { role, ..self.clone() }
    }
}

/// An expert and an amateur sequence proven to be position-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    key: InstanceKey,
    expert: TokenProbSequence,
    amateur: TokenProbSequence,
}

impl AlignedPair {
    pub fn key(&self) -> &InstanceKey {
        &self.key
    }

    pub fn expert(&self) -> &TokenProbSequence {
        &self.expert
    }

    pub fn amateur(&self) -> &TokenProbSequence {
        &self.amateur
    }

    pub fn sequence(&self, role: Role) -> &TokenProbSequence {
        match role {
            Role::Expert => &self.expert,
            Role::Amateur => &self.amateur,
        }
    }

    pub fn len(&self) -> usize {
        self.expert.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(p_expert, p_amateur)` per position.
    pub fn prob_pairs(&self) -> impl ExactSizeIterator<Item = (f64, f64)> + '_ {
        self.expert
            .tokens
            .iter()
            .zip(&self.amateur.tokens)
            .map(|(e, a)| (e.prob, a.prob))
    }

    pub fn into_parts(self) -> (InstanceKey, TokenProbSequence, TokenProbSequence) {
        (self.key, self.expert, self.amateur)
    }
}

/// Pairs two sequences, rejecting anything not aligned token-for-token.
///
/// Alignment is decided by token id, never by surface text.
pub fn validate_alignment(
    key: InstanceKey,
    expert: TokenProbSequence,
    amateur: TokenProbSequence,
) -> Result<AlignedPair, AlignmentError> {
    if expert.tokenizer_id != amateur.tokenizer_id {
        return Err(AlignmentError::TokenizerMismatch {
            expert: expert.tokenizer_id.clone(),
            amateur: amateur.tokenizer_id.clone(),
        });
    }
    if expert.len() != amateur.len() {
        return Err(AlignmentError::LengthMismatch {
            expert: expert.len(),
            amateur: amateur.len(),
        });
    }
    if let Some((position, (e, a))) = expert
        .tokens
        .iter()
        .zip(&amateur.tokens)
        .enumerate()
        .find(|(_, (e, a))| e.token_id != a.token_id)
    {
        return Err(AlignmentError::TokenMismatch {
            position,
            expert: e.token_id,
            amateur: a.token_id,
        });
    }
    Ok(AlignedPair { key, expert, amateur })
}

/// One line of the token-probability interchange format.
///
/// Field order matches the wire contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenProbRecord {
    pub dataset_id: String,
    pub segment_id: String,
    pub system_id: String,
    pub model_id: String,
    pub role: Role,
    pub temperature: f64,
    pub tokenizer_id: String,
    pub tokens: Vec<TokenProb>,
}

impl TokenProbRecord {
    pub fn from_sequence(key: &InstanceKey, seq: &TokenProbSequence) -> Self {
        Self {
            dataset_id: key.dataset_id.clone(),
            segment_id: key.segment_id.clone(),
            system_id: key.system_id.clone(),
            model_id: seq.model_id.clone(),
            role: seq.role,
            temperature: seq.temperature,
            tokenizer_id: seq.tokenizer_id.clone(),
            tokens: seq.tokens.clone(),
        }
    }

    pub fn key(&self) -> InstanceKey {
        InstanceKey::new(&self.dataset_id, &self.segment_id, &self.system_id)
    }

    pub fn into_sequence(self) -> Result<(InstanceKey, TokenProbSequence), InvariantError> {
        let key = self.key();
        let seq = TokenProbSequence::new(
            self.model_id,
            self.role,
            self.temperature,
            self.tokenizer_id,
            self.tokens,
        )?;
        Ok((key, seq))
    }
}

#[derive(Deserialize)]
struct RawInstance {
    dataset_id: String,
    segment_id: String,
    system_id: String,
    #[serde(default)]
    source: String,
    hypothesis: String,
    #[serde(default)]
    references: Option<Vec<String>>,
    #[serde(default)]
    human_scores: BTreeMap<String, f64>,
}

/// A hypothesis with its conditioning text, references and human judgments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct EvaluationInstance {
    dataset_id: String,
    segment_id: String,
    system_id: String,
    source: String,
    hypothesis: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    references: Option<Vec<String>>,
    human_scores: BTreeMap<String, f64>,
}

impl TryFrom<RawInstance> for EvaluationInstance {
    type Error = InvariantError;

    fn try_from(raw: RawInstance) -> Result<Self, Self::Error> {
        EvaluationInstance::new(
            InstanceKey::new(raw.dataset_id, raw.segment_id, raw.system_id),
            raw.source,
            raw.hypothesis,
            raw.references,
            raw.human_scores,
        )
    }
}

impl EvaluationInstance {
    pub fn new(
        key: InstanceKey,
        source: impl Into<String>,
        hypothesis: impl Into<String>,
        references: Option<Vec<String>>,
        human_scores: BTreeMap<String, f64>,
    ) -> Result<Self, InvariantError> {
        let hypothesis = hypothesis.into();
        if hypothesis.trim().is_empty() {
            return Err(InvariantError::EmptyHypothesis);
        }
        if let Some((dim, _)) = human_scores.iter().find(|(_, v)| !v.is_finite()) {
            return Err(InvariantError::HumanScore(dim.clone()));
        }
        Ok(Self {
            dataset_id: key.dataset_id,
            segment_id: key.segment_id,
            system_id: key.system_id,
            source: source.into(),
            hypothesis,
            references,
            human_scores,
        })
    }

    pub fn key(&self) -> InstanceKey {
        InstanceKey::new(&self.dataset_id, &self.segment_id, &self.system_id)
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn segment_id(&self) -> &str {
        &self.segment_id
    }

    pub fn system_id(&self) -> &str {
        &self.system_id
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn hypothesis(&self) -> &str {
        &self.hypothesis
    }

    pub fn references(&self) -> Option<&[String]> {
        self.references.as_deref()
    }

    pub fn human_scores(&self) -> &BTreeMap<String, f64> {
        &self.human_scores
    }

    pub fn human_score(&self, dimension: &str) -> Option<f64> {
        self.human_scores.get(dimension).copied()
    }
}

/// One line of a score file: ours, or an external metric's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    pub dataset_id: String,
    pub segment_id: String,
    pub system_id: String,
    pub scorer_id: String,
    pub score: f64,
}

/// Evaluator scores indexed by instance and scorer.
///
/// Scores are dimension-agnostic: one score per hypothesis per scorer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    entries: BTreeMap<(InstanceKey, String), f64>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        key: InstanceKey,
        scorer_id: impl Into<String>,
        score: f64,
    ) -> Result<Option<f64>, InvariantError> {
        let scorer = scorer_id.into();
        if !score.is_finite() {
            return Err(InvariantError::NonFiniteScore {
                key: Box::new(key),
                scorer,
            });
        }
        Ok(self.entries.insert((key, scorer), score))
    }

    pub fn get(&self, key: &InstanceKey, scorer_id: &str) -> Option<f64> {
        // BTreeMap lookup needs an owned tuple.
        self.entries.get(&(key.clone(), scorer_id.to_owned())).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&InstanceKey, &str, f64)> {
        self.entries.iter().map(|((k, s), v)| (k, s.as_str(), *v))
    }

    /// Distinct scorer ids in sorted order.
    pub fn scorer_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.entries.keys().map(|(_, s)| s.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn column(&self, scorer_id: &str) -> BTreeMap<InstanceKey, f64> {
        self.entries
            .iter()
            .filter(|((_, s), _)| s == scorer_id)
            .map(|((k, _), v)| (k.clone(), *v))
            .collect()
    }

    pub fn merge(&mut self, other: ScoreTable) {
        self.entries.extend(other.entries);
    }

    pub fn to_records(&self, schema_version: Option<u32>) -> Vec<ScoreRecord> {
        self.entries
            .iter()
            .map(|((k, s), v)| ScoreRecord {
                schema_version,
                dataset_id: k.dataset_id.clone(),
                segment_id: k.segment_id.clone(),
                system_id: k.system_id.clone(),
                scorer_id: s.clone(),
                score: *v,
            })
            .collect()
    }

    pub fn from_records(records: impl IntoIterator<Item = ScoreRecord>) -> Result<Self, InvariantError> {
        let mut table = Self::new();
        for r in records {
            table.insert(
                InstanceKey::new(r.dataset_id, r.segment_id, r.system_id),
                r.scorer_id,
                r.score,
            )?;
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(role: Role, ids: &[u32]) -> TokenProbSequence {
        let tokens = ids
            .iter()
            .map(|&id| TokenProb::new(id, format!("t{id}"), 0.5))
            .collect();
        TokenProbSequence::new("m", role, 1.0, "tok", tokens).unwrap()
    }

    fn key() -> InstanceKey {
        InstanceKey::new("d", "s", "y")
    }

    #[test]
    fn identical_ids_align() {
        let pair = validate_alignment(key(), seq(Role::Expert, &[5, 9, 2]), seq(Role::Amateur, &[5, 9, 2])).unwrap();
        assert_eq!(pair.len(), 3);
    }

    #[test]
    fn length_mismatch() {
        let err =
            validate_alignment(key(), seq(Role::Expert, &[5, 9, 2]), seq(Role::Amateur, &[5, 9, 2, 1])).unwrap_err();
        assert_eq!(err, AlignmentError::LengthMismatch { expert: 3, amateur: 4 });
    }

    #[test]
    fn token_mismatch_reports_position() {
        let err = validate_alignment(key(), seq(Role::Expert, &[5, 9, 2]), seq(Role::Amateur, &[5, 8, 2])).unwrap_err();
        assert_eq!(
            err,
            AlignmentError::TokenMismatch {
                position: 1,
                expert: 9,
                amateur: 8
            }
        );
    }

    #[test]
    fn tokenizer_mismatch() {
        let e = seq(Role::Expert, &[1]);
        let a = TokenProbSequence::new("m", Role::Amateur, 1.0, "other", e.tokens().to_vec()).unwrap();
        assert!(matches!(
            validate_alignment(key(), e, a),
            Err(AlignmentError::TokenizerMismatch { .. })
        ));
    }

    #[test]
    fn surface_text_does_not_affect_alignment() {
        let e = seq(Role::Expert, &[1, 2]);
        let tokens = vec![TokenProb::new(1, "x", 0.1), TokenProb::new(2, "y", 0.2)];
        let a = TokenProbSequence::new("m2", Role::Amateur, 1.5, "tok", tokens).unwrap();
        assert!(validate_alignment(key(), e, a).is_ok());
    }

    #[test]
    fn sequence_invariants() {
        assert_eq!(
            TokenProbSequence::new("m", Role::Expert, 1.0, "t", vec![]),
            Err(InvariantError::EmptySequence)
        );
        assert!(matches!(
            TokenProbSequence::new("m", Role::Expert, 0.0, "t", vec![TokenProb::new(0, "a", 0.5)]),
            Err(InvariantError::Temperature(_))
        ));
        assert!(matches!(
            TokenProbSequence::new("m", Role::Expert, 1.0, "t", vec![TokenProb::new(0, "a", 1.5)]),
            Err(InvariantError::Probability { position: 0, .. })
        ));
        assert!(matches!(
            TokenProbSequence::new("m", Role::Expert, 1.0, "t", vec![TokenProb::new(0, "a", f64::NAN)]),
            Err(InvariantError::Probability { .. })
        ));
    }

    #[test]
    fn decoding_validates() {
        let bad = r#"{"model_id":"m","role":"expert","temperature":0.5,"tokenizer_id":"t","tokens":[]}"#;
        assert!(serde_json::from_str::<TokenProbSequence>(bad).is_err());
        let negative_id = r#"{"model_id":"m","role":"expert","temperature":0.5,"tokenizer_id":"t","tokens":[{"token_id":-1,"text":"a","prob":0.5}]}"#;
        assert!(serde_json::from_str::<TokenProbSequence>(negative_id).is_err());
    }

    #[test]
    fn record_field_order_matches_wire_contract() {
        let s = seq(Role::Expert, &[3]);
        let rec = TokenProbRecord::from_sequence(&key(), &s);
        let line = serde_json::to_string(&rec).unwrap();
        assert_eq!(
            line,
            r#"{"dataset_id":"d","segment_id":"s","system_id":"y","model_id":"m","role":"expert","temperature":1.0,"tokenizer_id":"tok","tokens":[{"token_id":3,"text":"t3","prob":0.5}]}"#
        );
    }

    #[test]
    fn instance_invariants() {
        let empty = EvaluationInstance::new(key(), "src", "  ", None, BTreeMap::new());
        assert_eq!(empty, Err(InvariantError::EmptyHypothesis));
        let mut scores = BTreeMap::new();
        scores.insert("fluency".to_owned(), f64::INFINITY);
        assert!(matches!(
            EvaluationInstance::new(key(), "src", "h", None, scores),
            Err(InvariantError::HumanScore(_))
        ));
    }

    #[test]
    fn score_table_rejects_non_finite() {
        let mut t = ScoreTable::new();
        assert!(t.insert(key(), "s", f64::NEG_INFINITY).is_err());
        t.insert(key(), "s", -1.0).unwrap();
        assert_eq!(t.get(&key(), "s"), Some(-1.0));
        assert_eq!(t.scorer_ids(), vec!["s".to_owned()]);
    }
}
