use std::collections::{BTreeMap, HashMap};

use serde::Deserialize;

use super::{lines_with_offsets, read_text, Annotators, DatasetManifest, IngestError, LoadedDataset};
use crate::types::{EvaluationInstance, InstanceKey};

#[derive(Deserialize)]
struct SummevalRecord {
    id: String,
    model_id: String,
    decoded: String,
    #[serde(default)]
    expert_annotations: Vec<BTreeMap<String, f64>>,
    #[serde(default)]
    turker_annotations: Vec<BTreeMap<String, f64>>,
    #[serde(default)]
    references: Option<Vec<String>>,
    #[serde(default)]
    text: Option<String>,
}

#[derive(Deserialize)]
struct SourceRecord {
    id: String,
    text: String,
}

fn load_sources(manifest: &DatasetManifest) -> Result<HashMap<String, String>, IngestError> {
    let Some(path) = manifest.optional_path("sources") else {
        return Ok(HashMap::new());
    };
    let text = read_text(&path)?;
    let mut out = HashMap::new();
    for (line, byte_offset, body) in lines_with_offsets(&text) {
        let r: SourceRecord = serde_json::from_str(body).map_err(|e| IngestError::MalformedRecord {
            path: path.clone(),
            line,
            byte_offset,
            message: e.to_string(),
        })?;
        out.insert(r.id, r.text);
    }
    Ok(out)
}

/// One instance per (article, system); each dimension is the mean over the
/// selected annotators.
pub fn load_summeval(manifest: &DatasetManifest, annotators: Annotators) -> Result<LoadedDataset, IngestError> {
    let path = manifest.path("annotations")?;
    let text = read_text(&path)?;
    let sources = load_sources(manifest)?;
    let mut instances = Vec::new();
    let mut skipped = 0;
    let mut warnings = Vec::new();

    for (line, byte_offset, body) in lines_with_offsets(&text) {
        let rec: SummevalRecord = serde_json::from_str(body).map_err(|e| IngestError::MalformedRecord {
            path: path.clone(),
            line,
            byte_offset,
            message: e.to_string(),
        })?;
        let pool: Vec<&BTreeMap<String, f64>> = match annotators {
            Annotators::Experts => rec.expert_annotations.iter().collect(),
            Annotators::Crowd => rec.turker_annotations.iter().collect(),
            Annotators::All => rec.expert_annotations.iter().chain(&rec.turker_annotations).collect(),
        };
        let mut human = BTreeMap::new();
        for dim in &manifest.dimensions {
            let values: Vec<f64> = pool.iter().filter_map(|a| a.get(dim).copied()).collect();
            if values.is_empty() {
                return Err(IngestError::MissingAnnotation {
                    path: path.clone(),
                    line,
                    dimension: dim.clone(),
                });
            }
            human.insert(dim.clone(), values.iter().sum::<f64>() / values.len() as f64);
        }
        if rec.decoded.trim().is_empty() {
            skipped += 1;
            warnings.push(format!(
                "{}:{line}: empty summary for {}/{} skipped",
                path.display(),
                rec.id,
                rec.model_id
            ));
            log::warn!("{}", warnings.last().unwrap());
            continue;
        }
        let source = rec.text.or_else(|| sources.get(&rec.id).cloned()).unwrap_or_default();
        let key = InstanceKey::new(&manifest.dataset_id, rec.id, rec.model_id);
        let inst = EvaluationInstance::new(key, source, rec.decoded, rec.references, human).map_err(|source| {
            IngestError::Invariant {
                path: path.clone(),
                line,
                source,
            }
        })?;
        instances.push(inst);
    }
    instances.sort_by_key(EvaluationInstance::key);
    Ok(LoadedDataset {
        manifest: manifest.clone(),
        instances,
        skipped,
        warnings,
    })
}
