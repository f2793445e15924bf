use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{PromptTemplate, ProviderConfig, ProviderError, TokenProbProvider};
use crate::types::{
    validate_alignment, AlignedPair, EvaluationInstance, InstanceKey, Role, TokenProb, TokenProbSequence,
};

const VOCAB: u32 = 32_000;
const HEAD: usize = 5;

fn head_for(rng: &mut ChaCha8Rng, token_id: u32, p: f64) -> Vec<u32> {
    let mut head = Vec::with_capacity(HEAD);
    if p > 0.3 {
        head.push(token_id);
    }
    while head.len() < HEAD {
        let id = rng.random_range(0..VOCAB);
        if id != token_id && !head.contains(&id) {
            head.push(id);
        }
    }
    head
}

/// Reproducible aligned pair. `roughness` in `[0, 1]` mixes the amateur
/// away from the expert: `p_ama = (1 - r) p_exp + r q` with independent `q`.
pub fn mock_generate(seed: u64, length: usize, roughness: f64) -> AlignedPair {
    let r = roughness.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let length = length.max(1);
    let mut expert = Vec::with_capacity(length);
    let mut amateur = Vec::with_capacity(length);
    for i in 0..length {
        let token_id = rng.random_range(0..VOCAB);
        let p: f64 = rng.random();
        let q: f64 = rng.random();
        let head = head_for(&mut rng, token_id, p);
        let text = format!("tok{i}");
        expert.push(TokenProb::new(token_id, &text, p).with_top_k(head));
        amateur.push(TokenProb::new(token_id, text, (1.0 - r) * p + r * q));
    }
    let key = InstanceKey::new("mock", seed.to_string(), "mock");
    let e = TokenProbSequence::new("mock-expert", Role::Expert, 0.5, "mock-tok", expert).expect("valid mock");
    let a = TokenProbSequence::new("mock-amateur", Role::Amateur, 1.5, "mock-tok", amateur).expect("valid mock");
    validate_alignment(key, e, a).expect("mock sequences share ids")
}

/// Mean `|p_exp - p_ama|` of a pair.
pub fn mean_divergence(pair: &AlignedPair) -> f64 {
    pair.prob_pairs().map(|(e, a)| (e - a).abs()).sum::<f64>() / pair.len() as f64
}

/// Deterministic stand-in for a model backend.
///
/// Tokens are whitespace words of the hypothesis with hashed ids, so both
/// roles always align. Probabilities depend only on the seed, instance
/// key, roughness and configured temperature.
pub struct MockProvider {
    config: ProviderConfig,
    seed: u64,
    roughness: f64,
}

impl MockProvider {
    pub fn new(config: ProviderConfig, seed: u64, roughness: f64) -> Result<Self, ProviderError> {
        config.validate()?;
        Ok(Self {
            config,
            seed,
            roughness: roughness.clamp(0.0, 1.0),
        })
    }
}

fn stable_u64(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Two-outcome temperature scaling of a single probability.
fn temper(p: f64, temperature: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return p;
    }
    let a = p.powf(1.0 / temperature);
    let b = (1.0 - p).powf(1.0 / temperature);
    a / (a + b)
}

impl TokenProbProvider for MockProvider {
    fn role(&self) -> Role {
        self.config.role
    }

    fn fetch(
        &self,
        instance: &EvaluationInstance,
        _template: &PromptTemplate,
    ) -> Result<TokenProbSequence, ProviderError> {
        let key = instance.key();
        let seed = self.seed.to_string();
        let mut rng = ChaCha8Rng::seed_from_u64(stable_u64(&[&seed, &key.dataset_id, &key.segment_id, &key.system_id]));
        let mut tokens = Vec::new();
        for word in instance.hypothesis().split_whitespace() {
            let token_id = (stable_u64(&[word]) % u64::from(VOCAB)) as u32;
            let p: f64 = rng.random();
            let q: f64 = rng.random();
            let raw = match self.config.role {
                Role::Expert => p,
                Role::Amateur => (1.0 - self.roughness) * p + self.roughness * q,
            };
            let mut t = TokenProb::new(token_id, word, temper(raw, self.config.temperature));
            if let (Role::Expert, Some(k)) = (self.config.role, self.config.top_k_capture) {
                let mut head = head_for(&mut rng, token_id, p);
                head.truncate(k);
                t = t.with_top_k(head);
            }
            tokens.push(t);
        }
        let tokenizer = self
            .config
            .tokenizer_id
            .clone()
            .unwrap_or_else(|| "mock-tok".to_owned());
        Ok(TokenProbSequence::new(
            &self.config.model_id,
            self.config.role,
            self.config.temperature,
            tokenizer,
            tokens,
        )?)
    }
}
