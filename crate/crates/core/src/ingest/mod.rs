//! Dataset adapters: on-disk corpora and annotations to
//! [`EvaluationInstance`] lists, plus the token-probability interchange
//! files.
//!
//! Every loader returns instances sorted by key, and never emits a
//! partially valid record.

mod manifest;
mod mqm;
mod qags;
mod summeval;
pub mod synthetic;
mod tokenprobs;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::types::{AlignmentError, EvaluationInstance, InstanceKey, InvariantError, Role};

pub use manifest::{Annotators, DatasetFormat, DatasetManifest, Task};
pub use mqm::{load_mqm, SeverityWeights};
pub use qags::load_qags;
pub use summeval::load_summeval;
pub use tokenprobs::{
    load_token_records, load_tokenprobs, parse_token_records, write_token_records, write_tokenprobs, TokenProbSet,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid manifest: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("{path}:{line} (byte {byte_offset}): malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        byte_offset: usize,
        message: String,
    },
    #[error("{path}:{line}: missing annotation for `{dimension}`")]
    MissingAnnotation {
        path: PathBuf,
        line: usize,
        dimension: String,
    },
    #[error("{path}:{line}: unknown MQM severity `{severity}` (category `{category}`)")]
    UnknownSeverity {
        path: PathBuf,
        line: usize,
        severity: String,
        category: String,
    },
    #[error("{path}:{line}: segment {segment_id} has no output for system {system_id}")]
    MissingSystemOutput {
        path: PathBuf,
        line: usize,
        segment_id: String,
        system_id: String,
    },
    #[error("{path}:{line}: {source}")]
    Invariant {
        path: PathBuf,
        line: usize,
        #[source]
        source: InvariantError,
    },
    #[error("duplicate {role} record for {key}")]
    DuplicateRecord { key: InstanceKey, role: Role },
    #[error("{key}: missing {role} record")]
    MissingRole { key: InstanceKey, role: Role },
    #[error("{key}: {source}")]
    Alignment {
        key: InstanceKey,
        #[source]
        source: AlignmentError,
    },
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

/// Knobs shared by the dataset loaders.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub annotators: Annotators,
    pub severity_weights: SeverityWeights,
    /// Fail on a missing system output instead of skipping it.
    pub strict_outputs: bool,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub instances: Vec<EvaluationInstance>,
    /// Records skipped with a warning (e.g. empty system outputs).
    pub skipped: usize,
    pub warnings: Vec<String>,
}

/// Dispatches to the loader named by the manifest's format.
pub fn load_dataset(manifest: &DatasetManifest, options: &LoadOptions) -> Result<LoadedDataset, IngestError> {
    match manifest.format {
        DatasetFormat::Summeval => load_summeval(manifest, options.annotators),
        DatasetFormat::Qags => load_qags(manifest),
        DatasetFormat::Mqm => load_mqm(manifest, &options.severity_weights, options.strict_outputs),
        DatasetFormat::Instances => load_instances(manifest),
    }
}

/// Reads a file as UTF-8, dropping a byte-order mark. Bytes that are not
/// valid UTF-8 are decoded as Latin-1.
pub fn read_text(path: &Path) -> Result<String, IngestError> {
    let bytes = std::fs::read(path).map_err(|e| IngestError::io(path, e))?;
    let body = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(&bytes);
    match std::str::from_utf8(body) {
        Ok(s) => Ok(s.to_owned()),
        Err(_) => {
            log::warn!("{}: not valid UTF-8, decoding as Latin-1", path.display());
            Ok(body.iter().map(|&b| b as char).collect())
        }
    }
}

/// Non-blank lines with their 1-based line number and starting byte offset.
pub(crate) fn lines_with_offsets(text: &str) -> impl Iterator<Item = (usize, usize, &str)> {
    let mut offset = 0;
    text.split_inclusive('\n').enumerate().filter_map(move |(i, raw)| {
        let start = offset;
        offset += raw.len();
        let line = raw.trim_end_matches(['\n', '\r']);
        (!line.trim().is_empty()).then_some((i + 1, start, line))
    })
}

/// Pre-built instance lists, one JSON object per line.
fn load_instances(manifest: &DatasetManifest) -> Result<LoadedDataset, IngestError> {
    let path = manifest.path("instances")?;
    let text = read_text(&path)?;
    let mut instances = Vec::new();
    for (line, byte_offset, body) in lines_with_offsets(&text) {
        let inst: EvaluationInstance = serde_json::from_str(body).map_err(|e| IngestError::MalformedRecord {
            path: path.clone(),
            line,
            byte_offset,
            message: e.to_string(),
        })?;
        instances.push(inst);
    }
    instances.sort_by_key(EvaluationInstance::key);
    Ok(LoadedDataset {
        manifest: manifest.clone(),
        instances,
        skipped: 0,
        warnings: Vec::new(),
    })
}
