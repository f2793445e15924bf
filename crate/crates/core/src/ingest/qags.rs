use std::collections::BTreeMap;

use serde::Deserialize;

use super::{lines_with_offsets, read_text, DatasetManifest, IngestError, LoadedDataset};
use crate::types::{EvaluationInstance, InstanceKey};

#[derive(Deserialize)]
struct Response {
    response: String,
}

#[derive(Deserialize)]
struct SummarySentence {
    sentence: String,
    responses: Vec<Response>,
}

#[derive(Deserialize)]
struct QagsRecord {
    article: String,
    summary_sentences: Vec<SummarySentence>,
}

/// One instance per summary. Each sentence scores the fraction of "yes"
/// judgments; the summary scores the mean over its sentences.
pub fn load_qags(manifest: &DatasetManifest) -> Result<LoadedDataset, IngestError> {
    let path = manifest.path("annotations")?;
    let text = read_text(&path)?;
    let dimension = manifest
        .dimensions
        .first()
        .cloned()
        .unwrap_or_else(|| "factuality".to_owned());
    let system = manifest.system_id.clone().unwrap_or_else(|| "bart".to_owned());
    let mut instances = Vec::new();

    for (index, (line, byte_offset, body)) in lines_with_offsets(&text).enumerate() {
        let malformed = |message: String| IngestError::MalformedRecord {
            path: path.clone(),
            line,
            byte_offset,
            message,
        };
        let rec: QagsRecord = serde_json::from_str(body).map_err(|e| malformed(e.to_string()))?;
        if rec.summary_sentences.is_empty() {
            return Err(malformed("no summary sentences".into()));
        }
        let mut per_sentence = Vec::with_capacity(rec.summary_sentences.len());
        for s in &rec.summary_sentences {
            if s.responses.is_empty() {
                return Err(IngestError::MissingAnnotation {
                    path: path.clone(),
                    line,
                    dimension: dimension.clone(),
                });
            }
            let mut yes = 0usize;
            for r in &s.responses {
                match r.response.trim().to_ascii_lowercase().as_str() {
                    "yes" => yes += 1,
                    "no" => {}
                    other => return Err(malformed(format!("unexpected response `{other}`"))),
                }
            }
            per_sentence.push(yes as f64 / s.responses.len() as f64);
        }
        let score = per_sentence.iter().sum::<f64>() / per_sentence.len() as f64;
        let hypothesis = rec
            .summary_sentences
            .iter()
            .map(|s| s.sentence.trim())
            .collect::<Vec<_>>()
            .join(" ");
        let key = InstanceKey::new(&manifest.dataset_id, format!("{index:04}"), &system);
        let inst = EvaluationInstance::new(
            key,
            rec.article,
            hypothesis,
            None,
            BTreeMap::from([(dimension.clone(), score)]),
        )
        .map_err(|source| IngestError::Invariant {
            path: path.clone(),
            line,
            source,
        })?;
        instances.push(inst);
    }
    if instances.is_empty() {
        return Err(IngestError::MalformedRecord {
            path,
            line: 0,
            byte_offset: 0,
            message: "no records".into(),
        });
    }
    instances.sort_by_key(EvaluationInstance::key);
    Ok(LoadedDataset {
        manifest: manifest.clone(),
        instances,
        skipped: 0,
        warnings: Vec::new(),
    })
}
