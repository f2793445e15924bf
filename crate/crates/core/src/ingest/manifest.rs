use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Summarization,
    Translation,
}

/// On-disk layout a manifest points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    /// SummEval annotation release (JSON lines).
    Summeval,
    /// QAGS factuality judgments (JSON lines).
    Qags,
    /// WMT MQM annotation TSV.
    Mqm,
    /// Already-normalized evaluation instances (JSON lines).
    Instances,
}

/// Which SummEval annotators are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Annotators {
    #[default]
    Experts,
    Crowd,
    All,
}

/// A small TOML document naming a dataset and its files.
///
/// ```toml
/// dataset_id = "mqm22-zhen"
/// task = "translation"
/// format = "mqm"
/// language_pair = ["zh", "en"]
/// dimensions = ["mqm"]
///
/// [paths]
/// annotations = "mqm_generalMT2022_zhen.tsv"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub task: Task,
    pub format: DatasetFormat,
    #[serde(default)]
    pub language_pair: Option<(String, String)>,
    pub dimensions: Vec<String>,
    /// File role to path; relative paths resolve against the manifest.
    pub paths: BTreeMap<String, PathBuf>,
    /// System id for single-system corpora such as QAGS.
    #[serde(default)]
    pub system_id: Option<String>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = super::read_text(path)?;
        let mut m = Self::parse(&text).map_err(|message| IngestError::Manifest {
            path: path.to_owned(),
            message,
        })?;
        m.base_dir = path.parent().map(Path::to_owned).unwrap_or_default();
        Ok(m)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let m: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.dimensions.is_empty() {
            return Err("dimensions must not be empty".into());
        }
        if self.task == Task::Translation && self.language_pair.is_none() {
            return Err("translation manifests need a language_pair".into());
        }
        Ok(())
    }

    /// Resolved path for a file role.
    pub fn path(&self, role: &str) -> Result<PathBuf, IngestError> {
        let p = self.paths.get(role).ok_or_else(|| IngestError::Manifest {
            path: self.base_dir.clone(),
            message: format!("no `{role}` path"),
        })?;
        Ok(if p.is_absolute() {
            p.clone()
        } else {
            self.base_dir.join(p)
        })
    }

    pub fn optional_path(&self, role: &str) -> Option<PathBuf> {
        self.paths.contains_key(role).then(|| self.path(role).ok()).flatten()
    }
}
