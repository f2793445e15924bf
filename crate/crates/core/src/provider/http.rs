//! JSON-over-HTTP log-probability backend with a content-addressed cache.
//!
//! Request: `{model, prompt, continuation, temperature, top_k}`.
//! Response: `{tokenizer_id?, tokens: [{token_id, text, logprob, top_k?}]}`
//! with one entry per continuation token, teacher-forced.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PromptTemplate, ProviderConfig, ProviderError, ProviderKind, TokenProbProvider};
use crate::types::{EvaluationInstance, InstanceKey, Role, TokenProb, TokenProbSequence};

/// Bearer token sent with every request when set.
pub const CREDENTIALS_ENV: &str = "CONTRASTSCORE_API_KEY";

const BODY_EXCERPT: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub model: String,
    pub prompt: String,
    pub continuation: String,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireToken {
    pub token_id: u32,
    pub text: String,
    pub logprob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    #[serde(default)]
    pub tokenizer_id: Option<String>,
    pub tokens: Vec<WireToken>,
}

pub struct HttpProvider {
    config: ProviderConfig,
    endpoint: String,
    agent: ureq::Agent,
    requests: AtomicUsize,
    // Token ids seen per instance in this process, for drift detection
    // when no cache directory is configured.
    seen_ids: Mutex<HashMap<InstanceKey, Vec<u32>>>,
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn cache_err(path: &Path) -> impl FnOnce(std::io::Error) -> ProviderError + '_ {
    move |source| ProviderError::Cache {
        path: path.to_owned(),
        source,
    }
}

/// Writes via a temporary sibling and a rename so readers never observe a
/// partial file.
fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), ProviderError> {
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let tmp = path.with_extension(format!(
        "tmp-{}-{}",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::write(&tmp, bytes).map_err(cache_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(cache_err(path))
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        config.validate()?;
        if config.kind != ProviderKind::Http {
            return Err(ProviderError::Config("HttpProvider needs kind = http".into()));
        }
        let endpoint = config.endpoint.clone().unwrap_or_default();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        if let Some(dir) = &config.cache_dir {
            std::fs::create_dir_all(dir).map_err(cache_err(dir))?;
        }
        Ok(Self {
            config,
            endpoint,
            agent,
            requests: AtomicUsize::new(0),
            seen_ids: Mutex::new(HashMap::new()),
        })
    }

    /// Requests actually sent over the network by this provider.
    pub fn network_requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Cache key over instance, model, temperature and prompt.
    pub fn cache_key(&self, key: &InstanceKey, prompt: &str, continuation: &str) -> String {
        let material = serde_json::json!({
            "dataset_id": key.dataset_id,
            "segment_id": key.segment_id,
            "system_id": key.system_id,
            "model_id": self.config.model_id,
            "temperature": self.config.temperature,
            "prompt_sha256": sha_hex(prompt.as_bytes()),
            "continuation_sha256": sha_hex(continuation.as_bytes()),
            "top_k": self.top_k(),
        });
        sha_hex(material.to_string().as_bytes())
    }

    fn top_k(&self) -> Option<usize> {
        match self.config.role {
            Role::Expert => self.config.top_k_capture,
            Role::Amateur => None,
        }
    }

    fn cache_path(&self, name: &str) -> Option<PathBuf> {
        self.config.cache_dir.as_ref().map(|d| d.join(name))
    }

    fn read_cached(&self, path: &Path) -> Result<Option<TokenProbSequence>, ProviderError> {
        match std::fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| ProviderError::Response(format!("corrupt cache entry {}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(cache_err(path)(e)),
        }
    }

    fn check_drift(&self, key: &InstanceKey, seq: &TokenProbSequence) -> Result<(), ProviderError> {
        let ids: Vec<u32> = seq.tokens().iter().map(|t| t.token_id).collect();
        let mut seen = self.seen_ids.lock().expect("drift map poisoned");
        let ids_path = self.cache_path(&format!(
            "ids-{}.json",
            sha_hex(format!("{}\0{}\0{}", key.dataset_id, key.segment_id, key.system_id).as_bytes())
        ));
        let previous = match seen.get(key) {
            Some(p) => Some(p.clone()),
            None => match &ids_path {
                Some(p) => match std::fs::read(p) {
                    Ok(b) => serde_json::from_slice::<Vec<u32>>(&b).ok(),
                    Err(_) => None,
                },
                None => None,
            },
        };
        if let Some(prev) = previous {
            if prev != ids {
                return Err(ProviderError::TokenizationDrift { key: key.clone() });
            }
        } else if let Some(p) = &ids_path {
            atomic_write(p, &serde_json::to_vec(&ids).expect("ids serialize"))?;
        }
        seen.insert(key.clone(), ids);
        Ok(())
    }

    fn send(&self, request: &WireRequest) -> Result<WireResponse, ProviderError> {
        let attempts = self.config.retries + 1;
        let mut last = ProviderError::Transport("no attempt made".into());
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(100 << (attempt - 1).min(6)));
            }
            self.requests.fetch_add(1, Ordering::SeqCst);
            let mut req = self
                .agent
                .post(&self.endpoint)
                .header("content-type", "application/json");
            if let Ok(token) = std::env::var(CREDENTIALS_ENV) {
                req = req.header("authorization", format!("Bearer {token}"));
            }
            match req.send_json(request) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if resp.status().is_success() {
                        return resp
                            .body_mut()
                            .read_json::<WireResponse>()
                            .map_err(|e| ProviderError::Response(e.to_string()));
                    }
                    let body: String = resp
                        .body_mut()
                        .read_to_string()
                        .unwrap_or_default()
                        .chars()
                        .take(BODY_EXCERPT)
                        .collect();
                    let err = ProviderError::BackendError { status, body };
                    if status < 500 {
                        return Err(err);
                    }
                    last = err;
                }
                Err(ureq::Error::Timeout(_)) => last = ProviderError::Timeout { attempts: attempt + 1 },
                Err(ureq::Error::Io(e)) if e.kind() == std::io::ErrorKind::TimedOut => {
                    last = ProviderError::Timeout { attempts: attempt + 1 }
                }
                Err(e) => last = ProviderError::Transport(e.to_string()),
            }
            log::debug!("attempt {} of {attempts} failed: {last}", attempt + 1);
        }
        Err(last)
    }

    fn to_sequence(&self, resp: WireResponse) -> Result<TokenProbSequence, ProviderError> {
        let tokens = resp
            .tokens
            .into_iter()
            .map(|t| TokenProb {
                token_id: t.token_id,
                text: t.text,
                prob: t.logprob.exp().min(1.0),
                top_k: t.top_k,
            })
            .collect();
        let tokenizer = resp
            .tokenizer_id
            .or_else(|| self.config.tokenizer_id.clone())
            .unwrap_or_else(|| self.config.model_id.clone());
        Ok(TokenProbSequence::new(
            &self.config.model_id,
            self.config.role,
            self.config.temperature,
            tokenizer,
            tokens,
        )?)
    }
}

impl TokenProbProvider for HttpProvider {
    fn role(&self) -> Role {
        self.config.role
    }

    fn fetch(
        &self,
        instance: &EvaluationInstance,
        template: &PromptTemplate,
    ) -> Result<TokenProbSequence, ProviderError> {
        let key = instance.key();
        let prompt = template.render(instance);
        let cache_file = self.cache_path(&format!(
            "{}.json",
            self.cache_key(&key, &prompt, instance.hypothesis())
        ));
        if let Some(path) = &cache_file {
            if let Some(seq) = self.read_cached(path)? {
                self.check_drift(&key, &seq)?;
                return Ok(seq);
            }
        }
        let request = WireRequest {
            model: self.config.model_id.clone(),
            prompt,
            continuation: instance.hypothesis().to_owned(),
            temperature: self.config.temperature,
            top_k: self.top_k(),
        };
        let seq = self.to_sequence(self.send(&request)?)?;
        self.check_drift(&key, &seq)?;
        if let Some(path) = &cache_file {
            atomic_write(path, &serde_json::to_vec(&seq).expect("sequence serializes"))?;
        }
        Ok(seq)
    }
}
