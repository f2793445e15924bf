//! Loading, probability sourcing and scoring shared by the commands.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use contrastscore::baselines::{bleu, chrf, rouge, RougeVariant};
use contrastscore::ingest::{load_dataset, load_token_records, DatasetManifest, Task, TokenProbSet};
use contrastscore::provider::{
    HttpProvider, MockProvider, PromptTemplate, ProviderConfig, ProviderError, ProviderKind, TokenProbProvider,
};
use contrastscore::scorers::single_score;
use contrastscore::{
    score_pair, validate_alignment, AlignedPair, EvaluationInstance, InstanceKey, Role, ScoreTable, ScorerKind,
    ScorerSpec, TokenProbSequence,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DataConfig, ProviderChoice};
use crate::error::{config_err, CliError};

pub const BASELINE_IDS: [&str; 5] = ["bleu", "chrf", "rouge1", "rouge2", "rougeL"];

/// Instances from every manifest, plus the manifests themselves.
#[derive(Debug, Default)]
pub struct Corpus {
    pub manifests: Vec<DatasetManifest>,
    pub instances: Vec<EvaluationInstance>,
    pub skipped: usize,
    pub warnings: Vec<String>,
}

pub fn load_corpus(data: &DataConfig) -> Result<Corpus, CliError> {
    let options = data.load_options();
    let mut corpus = Corpus::default();
    for path in &data.manifests {
        let manifest = DatasetManifest::load(path).map_err(config_err)?;
        if corpus.manifests.iter().any(|m| m.dataset_id == manifest.dataset_id) {
            return Err(CliError::Config(format!(
                "dataset `{}` given twice",
                manifest.dataset_id
            )));
        }
        let loaded = load_dataset(&manifest, &options)?;
        log::info!("{}: {} instances", manifest.dataset_id, loaded.instances.len());
        corpus.skipped += loaded.skipped;
        corpus.warnings.extend(loaded.warnings);
        corpus.instances.extend(loaded.instances);
        corpus.manifests.push(manifest);
    }
    corpus.instances.sort_by_key(EvaluationInstance::key);
    Ok(corpus)
}

fn template_for(manifest: &DatasetManifest) -> PromptTemplate {
    match (manifest.task, &manifest.language_pair) {
        (Task::Translation, Some((_, target))) => PromptTemplate::for_target_code(target),
        _ => PromptTemplate::Summarization,
    }
}

/// A unit of work: an instance when one was loaded, else a bare key.
#[derive(Debug, Clone)]
pub struct Unit<'a> {
    pub key: InstanceKey,
    pub instance: Option<&'a EvaluationInstance>,
}

/// Builds the work list: every loaded instance, or every key in the
/// interchange files when no manifest was given.
pub fn units<'a>(corpus: &'a Corpus, source: &ProbSource) -> Vec<Unit<'a>> {
    if !corpus.manifests.is_empty() {
        return corpus
            .instances
            .iter()
            .map(|i| Unit {
                key: i.key(),
                instance: Some(i),
            })
            .collect();
    }
    match source {
        ProbSource::Set(set) => set
            .keys()
            .map(|k| Unit {
                key: k.clone(),
                instance: None,
            })
            .collect(),
        ProbSource::Providers { .. } => Vec::new(),
    }
}

/// Token probabilities from interchange files or live providers.
pub enum ProbSource {
    Set(Arc<TokenProbSet>),
    Providers {
        expert: Box<dyn TokenProbProvider>,
        amateur: Box<dyn TokenProbProvider>,
        templates: BTreeMap<String, PromptTemplate>,
    },
}

/// A per-instance problem recorded in the errors sidecar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    pub dataset_id: String,
    pub segment_id: String,
    pub system_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scorer_id: Option<String>,
    pub kind: String,
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl Issue {
    fn new(key: &InstanceKey, scorer_id: Option<&str>, kind: &str, severity: Severity, message: String) -> Self {
        Self {
            dataset_id: key.dataset_id.clone(),
            segment_id: key.segment_id.clone(),
            system_id: key.system_id.clone(),
            scorer_id: scorer_id.map(str::to_owned),
            kind: kind.to_owned(),
            severity,
            message,
        }
    }
}

/// A failure to obtain probabilities, kept as (kind, message).
type Fetch = Result<TokenProbSequence, (String, String)>;

fn provider_kind(e: &ProviderError) -> &'static str {
    match e {
        ProviderError::Timeout { .. } => "Timeout",
        ProviderError::BackendError { .. } => "BackendError",
        ProviderError::Transport(_) => "Transport",
        ProviderError::TokenizationDrift { .. } => "TokenizationDrift",
        ProviderError::NotFound { .. } => "MissingRole",
        ProviderError::Config(_) => "Config",
        ProviderError::Cache { .. } => "Cache",
        ProviderError::Response(_) => "Response",
        ProviderError::Invariant(_) => "Invariant",
        ProviderError::Alignment { .. } => "Alignment",
    }
}

impl ProbSource {
    pub fn build(data: &DataConfig, corpus: &Corpus) -> Result<Self, CliError> {
        let templates = corpus
            .manifests
            .iter()
            .map(|m| (m.dataset_id.clone(), template_for(m)))
            .collect();
        let mut files: Vec<PathBuf> = data.probs.clone();
        files.extend(corpus.manifests.iter().filter_map(|m| m.optional_path("tokenprobs")));
        match &data.provider {
            ProviderChoice::File => {
                if files.is_empty() {
                    return Err(CliError::Config(
                        "no token probabilities: pass --probs, a manifest with a tokenprobs path, or --provider".into(),
                    ));
                }
                Ok(ProbSource::Set(Arc::new(load_token_records(&files)?)))
            }
            ProviderChoice::Mock { seed, roughness } => {
                let cfg = |role, model: &str| {
                    let mut c = ProviderConfig::new(
                        ProviderKind::Mock,
                        model,
                        role,
                        ProviderConfig::default_temperature(role),
                    );
                    c.top_k_capture = (role == Role::Expert).then_some(5);
                    c
                };
                let expert =
                    MockProvider::new(cfg(Role::Expert, "mock-expert"), *seed, *roughness).map_err(config_err)?;
                let amateur =
                    MockProvider::new(cfg(Role::Amateur, "mock-amateur"), *seed, *roughness).map_err(config_err)?;
                Ok(ProbSource::Providers {
                    expert: Box::new(expert),
                    amateur: Box::new(amateur),
                    templates,
                })
            }
            ProviderChoice::Http { expert, amateur } => Ok(ProbSource::Providers {
                expert: Box::new(HttpProvider::new((**expert).clone()).map_err(config_err)?),
                amateur: Box::new(HttpProvider::new((**amateur).clone()).map_err(config_err)?),
                templates,
            }),
        }
    }

    /// Wraps an already-loaded set, for callers that build one in memory.
    pub fn from_set(set: TokenProbSet) -> Self {
        ProbSource::Set(Arc::new(set))
    }

    fn fetch(&self, unit: &Unit<'_>, role: Role) -> Fetch {
        match self {
            ProbSource::Set(set) => set.sequence(&unit.key, role).cloned().ok_or_else(|| {
                (
                    "MissingRole".to_owned(),
                    format!("{}: no {role} token probabilities", unit.key),
                )
            }),
            ProbSource::Providers {
                expert,
                amateur,
                templates,
            } => {
                let Some(instance) = unit.instance else {
                    return Err((
                        "MissingInstance".into(),
                        format!("{}: no instance to prompt with", unit.key),
                    ));
                };
                let template = templates
                    .get(instance.dataset_id())
                    .cloned()
                    .unwrap_or(PromptTemplate::Summarization);
                let provider = match role {
                    Role::Expert => expert,
                    Role::Amateur => amateur,
                };
                provider
                    .fetch(instance, &template)
                    .map_err(|e| (provider_kind(&e).to_owned(), e.to_string()))
            }
        }
    }
}

/// Sequences obtained for one unit; also what `--dump-probs` writes.
#[derive(Debug, Clone)]
pub struct UnitProbs {
    pub key: InstanceKey,
    pub expert: Option<Fetch>,
    pub amateur: Option<Fetch>,
}

impl UnitProbs {
    pub fn pair(&self) -> Result<AlignedPair, (String, String)> {
        let get = |f: &Option<Fetch>, role: Role| -> Result<TokenProbSequence, (String, String)> {
            match f {
                Some(r) => r.clone(),
                None => Err(("MissingRole".into(), format!("{}: {role} not fetched", self.key))),
            }
        };
        let e = get(&self.expert, Role::Expert)?;
        let a = get(&self.amateur, Role::Amateur)?;
        validate_alignment(self.key.clone(), e, a).map_err(|err| ("Alignment".into(), format!("{}: {err}", self.key)))
    }
}

pub struct ScoreOutcome {
    pub table: ScoreTable,
    pub issues: Vec<Issue>,
    pub probs: Vec<UnitProbs>,
}

impl ScoreOutcome {
    pub fn hard_errors(&self) -> usize {
        self.issues.iter().filter(|i| i.severity == Severity::Error).count()
    }
}

fn baseline_scores(instance: &EvaluationInstance) -> Result<Vec<(&'static str, f64)>, String> {
    let refs = instance.references().ok_or("no references")?;
    let hyp = instance.hypothesis();
    let e = |e: contrastscore::baselines::BaselineError| e.to_string();
    Ok(vec![
        (BASELINE_IDS[0], bleu(hyp, refs, 4).map_err(e)?.value),
        (BASELINE_IDS[1], chrf(hyp, refs, 6, 2.0).map_err(e)?.value),
        (BASELINE_IDS[2], rouge(hyp, refs, RougeVariant::R1).map_err(e)?.value),
        (BASELINE_IDS[3], rouge(hyp, refs, RougeVariant::R2).map_err(e)?.value),
        (BASELINE_IDS[4], rouge(hyp, refs, RougeVariant::RL).map_err(e)?.value),
    ])
}

type UnitResult = (UnitProbs, Vec<(String, Result<f64, Issue>)>, Option<Issue>);

fn score_unit(unit: &Unit<'_>, source: &ProbSource, specs: &[ScorerSpec], baselines: bool) -> UnitResult {
    let needs = |role: Role| specs.iter().any(|s| s.kind != ScorerKind::Single || s.role == role);
    let probs = UnitProbs {
        key: unit.key.clone(),
        expert: needs(Role::Expert).then(|| source.fetch(unit, Role::Expert)),
        amateur: needs(Role::Amateur).then(|| source.fetch(unit, Role::Amateur)),
    };
    let pair = specs.iter().any(|s| s.kind.needs_pair()).then(|| probs.pair());
    let mut out = Vec::with_capacity(specs.len() + BASELINE_IDS.len());
    for spec in specs {
        let id = spec.id();
        let issue = |(kind, msg): (String, String)| Issue::new(&unit.key, Some(&id), &kind, Severity::Error, msg);
        let result = if spec.kind == ScorerKind::Single {
            let fetched = match spec.role {
                Role::Expert => probs.expert.as_ref(),
                Role::Amateur => probs.amateur.as_ref(),
            };
            match fetched.expect("fetched for every needed role") {
                Ok(seq) => Ok(single_score(seq, spec)),
                Err(e) => Err(issue(e.clone())),
            }
        } else {
            match pair.as_ref().expect("pair built when needed") {
                Ok(p) => score_pair(p, spec).map_err(|e| issue(("Score".into(), format!("{}: {e}", unit.key)))),
                Err(e) => Err(issue(e.clone())),
            }
        };
        let result = match result {
            Ok(s) if !s.is_finite() => Err(issue(("NonFinite".into(), format!("{}: score {s}", unit.key)))),
            other => other,
        };
        out.push((id, result));
    }
    let mut soft = None;
    if baselines {
        match unit.instance.map(baseline_scores) {
            Some(Ok(scores)) => out.extend(scores.into_iter().map(|(id, s)| (id.to_owned(), Ok(s)))),
            Some(Err(msg)) => {
                soft = Some(Issue::new(
                    &unit.key,
                    None,
                    "NoReferences",
                    Severity::Warning,
                    format!("{}: {msg}", unit.key),
                ))
            }
            None => {}
        }
    }
    (probs, out, soft)
}

/// Scores all units in parallel on the current rayon pool and assembles
/// the results in unit order.
pub fn score_units(units: &[Unit<'_>], source: &ProbSource, specs: &[ScorerSpec], baselines: bool) -> ScoreOutcome {
    let results: Vec<UnitResult> = units
        .par_iter()
        .map(|u| score_unit(u, source, specs, baselines))
        .collect();
    let mut table = ScoreTable::new();
    let mut issues = Vec::new();
    let mut probs = Vec::with_capacity(results.len());
    for (unit_probs, scores, soft) in results {
        for (id, r) in scores {
            match r {
                Ok(s) => {
                    table.insert(unit_probs.key.clone(), id, s).expect("finite checked");
                }
                Err(issue) => issues.push(issue),
            }
        }
        issues.extend(soft);
        probs.push(unit_probs);
    }
    ScoreOutcome { table, issues, probs }
}
