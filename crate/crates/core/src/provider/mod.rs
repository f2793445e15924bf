//! Sources of token probabilities: interchange files, a remote
//! log-probability endpoint, or a deterministic mock.
//!
//! Scoring only ever sees the returned [`TokenProbSequence`]s, so results
//! do not depend on which provider produced them.

mod http;
mod mock;
mod prompt;

use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::TokenProbSet;
use crate::types::{
    validate_alignment, AlignedPair, AlignmentError, EvaluationInstance, InstanceKey, InvariantError, Role,
    TokenProbSequence,
};

pub use http::{HttpProvider, WireRequest, WireResponse, WireToken, CREDENTIALS_ENV};
pub use mock::{mean_divergence, mock_generate, MockProvider};
pub use prompt::PromptTemplate;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: usize },
    #[error("backend returned {status}: {body}")]
    BackendError { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("{key}: backend tokenization differs from the one cached for another role")]
    TokenizationDrift { key: InstanceKey },
    #[error("{key}: no {role} record available")]
    NotFound { key: InstanceKey, role: Role },
    #[error("invalid provider config: {0}")]
    Config(String),
    #[error("cache i/o at {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed backend response: {0}")]
    Response(String),
    #[error("{0}")]
    Invariant(#[from] InvariantError),
    #[error("{key}: {source}")]
    Alignment {
        key: InstanceKey,
        #[source]
        source: AlignmentError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    File,
    Http,
    Mock,
}

impl std::str::FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "file" => Ok(ProviderKind::File),
            "http" => Ok(ProviderKind::Http),
            "mock" => Ok(ProviderKind::Mock),
            other => Err(format!("unknown provider `{other}`")),
        }
    }
}

/// Configuration for one role's provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    pub model_id: String,
    pub role: Role,
    pub temperature: f64,
    /// Tokenizer fingerprint recorded when the backend does not report one.
    #[serde(default)]
    pub tokenizer_id: Option<String>,
    /// Capture this many expert head token ids per position.
    #[serde(default)]
    pub top_k_capture: Option<usize>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: usize,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout() -> f64 {
    30.0
}

fn default_retries() -> usize {
    3
}

fn default_in_flight() -> usize {
    4
}

impl ProviderConfig {
    pub fn new(kind: ProviderKind, model_id: impl Into<String>, role: Role, temperature: f64) -> Self {
        Self {
            kind,
            endpoint: None,
            model_id: model_id.into(),
            role,
            temperature,
            tokenizer_id: None,
            top_k_capture: None,
            timeout_secs: default_timeout(),
            retries: default_retries(),
            cache_dir: None,
            max_in_flight: default_in_flight(),
        }
    }

    /// Expert at temperature 0.5, amateur at 1.5.
    pub fn default_temperature(role: Role) -> f64 {
        match role {
            Role::Expert => 0.5,
            Role::Amateur => 1.5,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if (self.kind == ProviderKind::Http) != self.endpoint.is_some() {
            return Err(ProviderError::Config(
                "endpoint must be set for the http provider and only for it".into(),
            ));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(ProviderError::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.max_in_flight == 0 {
            return Err(ProviderError::Config("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }
}

pub trait TokenProbProvider: Send + Sync {
    fn role(&self) -> Role;

    /// Probabilities of each hypothesis token under prompt + source.
    fn fetch(
        &self,
        instance: &EvaluationInstance,
        template: &PromptTemplate,
    ) -> Result<TokenProbSequence, ProviderError>;
}

/// Serves sequences already loaded from interchange files.
pub struct FileProvider {
    set: Arc<TokenProbSet>,
    role: Role,
}

impl FileProvider {
    pub fn new(set: Arc<TokenProbSet>, role: Role) -> Self {
        Self { set, role }
    }
}

impl TokenProbProvider for FileProvider {
    fn role(&self) -> Role {
        self.role
    }

    fn fetch(
        &self,
        instance: &EvaluationInstance,
        _template: &PromptTemplate,
    ) -> Result<TokenProbSequence, ProviderError> {
        let key = instance.key();
        self.set
            .sequence(&key, self.role)
            .cloned()
            .ok_or(ProviderError::NotFound { key, role: self.role })
    }
}

/// Fetches both roles for one instance and aligns them.
pub fn fetch_pair(
    expert: &dyn TokenProbProvider,
    amateur: &dyn TokenProbProvider,
    instance: &EvaluationInstance,
    template: &PromptTemplate,
) -> Result<AlignedPair, ProviderError> {
    let e = expert.fetch(instance, template)?;
    let a = amateur.fetch(instance, template)?;
    let key = instance.key();
    validate_alignment(key.clone(), e, a).map_err(|source| ProviderError::Alignment { key, source })
}

/// Fetches pairs for many instances with at most `max_in_flight`
/// concurrent requests. Results keep the input order.
pub fn fetch_pairs(
    expert: &dyn TokenProbProvider,
    amateur: &dyn TokenProbProvider,
    instances: &[EvaluationInstance],
    template: &PromptTemplate,
    max_in_flight: usize,
) -> Result<Vec<Result<AlignedPair, ProviderError>>, ProviderError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .map_err(|e| ProviderError::Config(e.to_string()))?;
    Ok(pool.install(|| {
        instances
            .par_iter()
            .map(|inst| fetch_pair(expert, amateur, inst, template))
            .collect()
    }))
}
