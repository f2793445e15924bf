use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::types::EvaluationInstance;

/// Task prompts the hypothesis is conditioned on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum PromptTemplate {
    Translation { target_language: String },
    Summarization,
}

impl PromptTemplate {
    pub fn template_text(&self) -> String {
        match self {
            PromptTemplate::Translation { target_language } => {
                format!("Translate the following sentence to {target_language}: {{source}}")
            }
            PromptTemplate::Summarization => {
                "Write an accurate, relevant, and coherent summary of the following texts:\n{source}\nSummary:\n"
                    .to_owned()
            }
        }
    }

    pub fn render(&self, instance: &EvaluationInstance) -> String {
        self.template_text().replace("{source}", instance.source())
    }

    /// Hex SHA-256 of the template text; recorded so caches built under a
    /// different template are detectable.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.template_text().as_bytes()))
    }

    /// Full language name for common language codes.
    pub fn for_target_code(code: &str) -> Self {
        let name = match code {
            "en" => "English",
            "de" => "German",
            "ru" => "Russian",
            "zh" => "Chinese",
            "he" => "Hebrew",
            other => other,
        };
        PromptTemplate::Translation {
            target_language: name.to_owned(),
        }
    }
}
