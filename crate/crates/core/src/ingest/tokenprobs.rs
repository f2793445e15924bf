use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{lines_with_offsets, read_text, IngestError};
use crate::types::{validate_alignment, AlignedPair, InstanceKey, Role, TokenProbRecord, TokenProbSequence};

#[derive(Debug, Clone, Default, PartialEq)]
struct Slots {
    expert: Option<TokenProbSequence>,
    amateur: Option<TokenProbSequence>,
}

impl Slots {
    fn slot(&mut self, role: Role) -> &mut Option<TokenProbSequence> {
        match role {
            Role::Expert => &mut self.expert,
            Role::Amateur => &mut self.amateur,
        }
    }
}

/// Interchange records grouped by instance, not yet paired.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenProbSet {
    entries: BTreeMap<InstanceKey, Slots>,
}

impl TokenProbSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: InstanceKey, seq: TokenProbSequence) -> Result<(), IngestError> {
        let role = seq.role();
        let slot = self.entries.entry(key.clone()).or_default().slot(role);
        if slot.is_some() {
            return Err(IngestError::DuplicateRecord { key, role });
        }
        *slot = Some(seq);
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &InstanceKey> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sequence(&self, key: &InstanceKey, role: Role) -> Option<&TokenProbSequence> {
        let s = self.entries.get(key)?;
        match role {
            Role::Expert => s.expert.as_ref(),
            Role::Amateur => s.amateur.as_ref(),
        }
    }

    /// Validated pair for one instance.
    pub fn pair(&self, key: &InstanceKey) -> Result<AlignedPair, IngestError> {
        let expert = self
            .sequence(key, Role::Expert)
            .ok_or_else(|| IngestError::MissingRole {
                key: key.clone(),
                role: Role::Expert,
            })?;
        let amateur = self
            .sequence(key, Role::Amateur)
            .ok_or_else(|| IngestError::MissingRole {
                key: key.clone(),
                role: Role::Amateur,
            })?;
        validate_alignment(key.clone(), expert.clone(), amateur.clone()).map_err(|source| IngestError::Alignment {
            key: key.clone(),
            source,
        })
    }

    /// Pairs every instance; the first missing role or misalignment fails.
    pub fn into_pairs(self) -> Result<BTreeMap<InstanceKey, AlignedPair>, IngestError> {
        self.entries.keys().map(|k| Ok((k.clone(), self.pair(k)?))).collect()
    }

    pub fn records(&self) -> Vec<TokenProbRecord> {
        let mut out = Vec::new();
        for (key, slots) in &self.entries {
            for seq in [&slots.expert, &slots.amateur].into_iter().flatten() {
                out.push(TokenProbRecord::from_sequence(key, seq));
            }
        }
        out
    }
}

/// Parses one interchange file's text.
pub fn parse_token_records(path: &Path, text: &str) -> Result<Vec<(InstanceKey, TokenProbSequence)>, IngestError> {
    lines_with_offsets(text)
        .map(|(line, byte_offset, body)| {
            let rec: TokenProbRecord = serde_json::from_str(body).map_err(|e| IngestError::MalformedRecord {
                path: path.to_owned(),
                line,
                byte_offset,
                message: e.to_string(),
            })?;
            rec.into_sequence().map_err(|source| IngestError::Invariant {
                path: path.to_owned(),
                line,
                source,
            })
        })
        .collect()
}

/// Reads interchange files (in parallel) and merges them in argument order.
pub fn load_token_records(paths: &[PathBuf]) -> Result<TokenProbSet, IngestError> {
    let parsed: Vec<Result<Vec<_>, IngestError>> = paths
        .par_iter()
        .map(|p| parse_token_records(p, &read_text(p)?))
        .collect();
    let mut set = TokenProbSet::new();
    for file in parsed {
        for (key, seq) in file? {
            set.insert(key, seq)?;
        }
    }
    Ok(set)
}

/// Reads interchange files and pairs every instance.
pub fn load_tokenprobs(paths: &[PathBuf]) -> Result<BTreeMap<InstanceKey, AlignedPair>, IngestError> {
    load_token_records(paths)?.into_pairs()
}

pub fn write_token_records(path: &Path, records: &[TokenProbRecord]) -> Result<(), IngestError> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("records serialize");
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| IngestError::io(path, e))?;
    f.write_all(&buf).map_err(|e| IngestError::io(path, e))
}

/// Writes expert then amateur line for each pair, in iteration order.
pub fn write_tokenprobs<'a>(path: &Path, pairs: impl IntoIterator<Item = &'a AlignedPair>) -> Result<(), IngestError> {
    let records: Vec<TokenProbRecord> = pairs
        .into_iter()
        .flat_map(|p| {
            [
                TokenProbRecord::from_sequence(p.key(), p.expert()),
                TokenProbRecord::from_sequence(p.key(), p.amateur()),
            ]
        })
        .collect();
    write_token_records(path, &records)
}
