//! Contrastive expert/amateur scoring for reference-free text evaluation.

pub mod baselines;
pub mod bench;
pub mod case_study;
pub mod ingest;
pub mod metaeval;
pub mod provider;
pub mod scorer_spec;
pub mod scorers;
pub mod types;

pub use scorer_spec::{LogBase, ScorerKind, ScorerSpec, Weighting};
pub use scorers::{score_pair, score_pairs, ScoreError, ScoreFailure, TokenScoreBreakdown};
pub use types::{
    validate_alignment, AlignedPair, AlignmentError, EvaluationInstance, InstanceKey, InvariantError, Role,
    ScoreRecord, ScoreTable, TokenProb, TokenProbRecord, TokenProbSequence,
};
