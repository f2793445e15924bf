use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{lines_with_offsets, read_text, DatasetManifest, IngestError, LoadedDataset};
use crate::types::{EvaluationInstance, InstanceKey};

/// Penalties per MQM severity, with per-category overrides.
///
/// Keys are matched lowercased with any trailing `!` removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityWeights {
    pub severity: BTreeMap<String, f64>,
    #[serde(default)]
    pub category: BTreeMap<String, f64>,
}

impl Default for SeverityWeights {
    fn default() -> Self {
        let severity = [
            ("major", -5.0),
            ("minor", -1.0),
            ("critical", -25.0),
            ("no-error", 0.0),
            ("neutral", 0.0),
        ];
        Self {
            severity: severity.iter().map(|&(k, v)| (k.to_owned(), v)).collect(),
            category: BTreeMap::from([("non-translation".to_owned(), -25.0)]),
        }
    }
}

fn normalize(s: &str) -> String {
    s.trim().trim_end_matches('!').trim().to_lowercase()
}

impl SeverityWeights {
    pub fn penalty(&self, severity: &str, category: &str) -> Option<f64> {
        self.category
            .get(&normalize(category))
            .or_else(|| self.severity.get(&normalize(severity)))
            .copied()
    }
}

const REQUIRED: [&str; 6] = ["system", "seg_id", "rater", "target", "category", "severity"];

#[derive(Default)]
struct Cell {
    source: String,
    target: String,
    first_line: usize,
    raters: BTreeMap<String, f64>,
}

fn load_references(manifest: &DatasetManifest) -> Result<HashMap<String, String>, IngestError> {
    let Some(path) = manifest.optional_path("references") else {
        return Ok(HashMap::new());
    };
    let text = read_text(&path)?;
    let mut out = HashMap::new();
    for (line, byte_offset, body) in lines_with_offsets(&text) {
        let (seg, reference) = body.split_once('\t').ok_or_else(|| IngestError::MalformedRecord {
            path: path.clone(),
            line,
            byte_offset,
            message: "expected `seg_id<TAB>reference`".into(),
        })?;
        out.insert(seg.trim().to_owned(), reference.to_owned());
    }
    Ok(out)
}

/// One instance per (segment, system). The human score is the sum of
/// severity penalties per rater, averaged over raters; 0 when error-free.
pub fn load_mqm(
    manifest: &DatasetManifest,
    weights: &SeverityWeights,
    strict_outputs: bool,
) -> Result<LoadedDataset, IngestError> {
    let path = manifest.path("annotations")?;
    let text = read_text(&path)?;
    let references = load_references(manifest)?;
    let dimension = manifest.dimensions.first().cloned().unwrap_or_else(|| "mqm".to_owned());

    let mut rows = lines_with_offsets(&text);
    let Some((_, _, header)) = rows.next() else {
        return Err(IngestError::MalformedRecord {
            path,
            line: 0,
            byte_offset: 0,
            message: "empty file".into(),
        });
    };
    let columns: HashMap<&str, usize> = header.split('\t').enumerate().map(|(i, c)| (c.trim(), i)).collect();
    let mut idx = [0usize; REQUIRED.len()];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = *columns.get(name).ok_or_else(|| IngestError::MalformedRecord {
            path: path.clone(),
            line: 1,
            byte_offset: 0,
            message: format!("header lacks `{name}` column"),
        })?;
    }
    let [c_system, c_seg, c_rater, c_target, c_category, c_severity] = idx;
    let c_source = columns.get("source").copied();

    let mut cells: BTreeMap<(String, String), Cell> = BTreeMap::new();
    for (line, byte_offset, body) in rows {
        let fields: Vec<&str> = body.split('\t').collect();
        let get = |i: usize| -> Result<&str, IngestError> {
            fields.get(i).copied().ok_or_else(|| IngestError::MalformedRecord {
                path: path.clone(),
                line,
                byte_offset,
                message: format!("expected at least {} columns, got {}", i + 1, fields.len()),
            })
        };
        let system = get(c_system)?.trim().to_owned();
        let seg = get(c_seg)?.trim().to_owned();
        let rater = get(c_rater)?.trim().to_owned();
        let target = get(c_target)?;
        let category = get(c_category)?;
        let severity = get(c_severity)?;
        let penalty = weights
            .penalty(severity, category)
            .ok_or_else(|| IngestError::UnknownSeverity {
                path: path.clone(),
                line,
                severity: severity.to_owned(),
                category: category.to_owned(),
            })?;
        let cell = cells.entry((seg, system)).or_insert_with(|| Cell {
            first_line: line,
            ..Cell::default()
        });
        if cell.target.is_empty() {
            cell.target = target.to_owned();
        }
        if cell.source.is_empty() {
            if let Some(i) = c_source {
                cell.source = fields.get(i).copied().unwrap_or_default().to_owned();
            }
        }
        *cell.raters.entry(rater).or_insert(0.0) += penalty;
    }

    let mut instances = Vec::with_capacity(cells.len());
    let mut skipped = 0;
    let mut warnings = Vec::new();
    for ((seg, system), cell) in cells {
        if cell.target.trim().is_empty() {
            if strict_outputs {
                return Err(IngestError::MissingSystemOutput {
                    path: path.clone(),
                    line: cell.first_line,
                    segment_id: seg,
                    system_id: system,
                });
            }
            skipped += 1;
            let w = format!(
                "{}: segment {seg} has no output for system {system}; skipped",
                path.display()
            );
            log::warn!("{w}");
            warnings.push(w);
            continue;
        }
        let score = cell.raters.values().sum::<f64>() / cell.raters.len() as f64;
        let refs = references.get(&seg).map(|r| vec![r.clone()]);
        let key = InstanceKey::new(&manifest.dataset_id, seg, system);
        let inst = EvaluationInstance::new(
            key,
            cell.source,
            cell.target,
            refs,
            BTreeMap::from([(dimension.clone(), score)]),
        )
        .map_err(|source| IngestError::Invariant {
            path: path.clone(),
            line: cell.first_line,
            source,
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
