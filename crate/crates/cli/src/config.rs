//! Run configuration: command-line flags over a TOML file over defaults.

use std::path::{Path, PathBuf};

use contrastscore::ingest::{Annotators, LoadOptions, SeverityWeights};
use contrastscore::metaeval::{CorrelationMode, MetaEvalConfig, PairGrouping, TiePolicy, UnfairnessMode};
use contrastscore::provider::{ProviderConfig, ProviderKind};
use contrastscore::{Role, ScorerSpec};
use serde::{Deserialize, Serialize};

use crate::args::{DataArgs, EvaluateArgs};
use crate::error::{config_err, CliError};

pub const DEFAULT_OUT: &str = "contrastscore-out";
pub const DEFAULT_MOCK_ROUGHNESS: f64 = 0.5;
pub const DEFAULT_SCORERS: [&str; 4] = [
    "single:role=expert",
    "single:role=amateur",
    "ensemble_avg",
    "contrast:gamma=0.1",
];

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub manifests: Vec<PathBuf>,
    pub probs: Vec<PathBuf>,
    pub scorers: Vec<String>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub baselines: Option<bool>,
    pub severity_weights: Option<PathBuf>,
    pub annotators: Option<String>,
    pub strict_outputs: Option<bool>,
    pub tie_policy: Option<String>,
    pub grouping: Option<String>,
    pub correlation: Option<String>,
    pub unfairness: Option<String>,
    pub likelihood_scorer: Option<String>,
    pub sweep_grid: Option<String>,
    pub target: Option<String>,
    pub batch_size: Option<usize>,
    pub warmup: Option<usize>,
    pub samples: Option<usize>,
    pub length: Option<usize>,
    pub rounds: Option<usize>,
    pub provider: ProviderSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSection {
    pub kind: Option<String>,
    pub seed: Option<u64>,
    pub roughness: Option<f64>,
    pub expert: Option<ProviderConfig>,
    pub amateur: Option<ProviderConfig>,
}

impl FileConfig {
    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.manifests.iter_mut().for_each(fix);
        cfg.probs.iter_mut().for_each(fix);
        cfg.out.iter_mut().for_each(fix);
        cfg.severity_weights.iter_mut().for_each(fix);
        for p in [&mut cfg.provider.expert, &mut cfg.provider.amateur]
            .into_iter()
            .flatten()
        {
            p.cache_dir.iter_mut().for_each(fix);
        }
        Ok(cfg)
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn pick_list<T: Clone>(flag: &[T], file: &[T]) -> Vec<T> {
    if flag.is_empty() {
        file.to_vec()
    } else {
        flag.to_vec()
    }
}

fn parse_with<T>(value: Option<String>, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<Option<T>, CliError> {
    value
        .map(|v| f(&v).ok_or_else(|| CliError::Config(format!("unknown {what} `{v}`"))))
        .transpose()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderChoice {
    File,
    Mock {
        seed: u64,
        roughness: f64,
    },
    Http {
        expert: Box<ProviderConfig>,
        amateur: Box<ProviderConfig>,
    },
}

/// Where data comes from and how it is loaded.
#[derive(Debug, Clone, Serialize)]
pub struct DataConfig {
    pub manifests: Vec<PathBuf>,
    pub probs: Vec<PathBuf>,
    pub provider: ProviderChoice,
    pub annotators: Annotators,
    pub severity_weights: SeverityWeights,
    pub strict_outputs: bool,
}

impl DataConfig {
    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            annotators: self.annotators,
            severity_weights: self.severity_weights.clone(),
            strict_outputs: self.strict_outputs,
        }
    }
}

/// The file config plus resolution helpers shared by every command.
#[derive(Debug, Default)]
pub struct Resolver {
    pub file: FileConfig,
}

impl Resolver {
    pub fn new(config: Option<&Path>) -> Result<Self, CliError> {
        Ok(Self {
            file: match config {
                Some(p) => FileConfig::load(p)?,
                None => FileConfig::default(),
            },
        })
    }

    pub fn workers(&self, flag: Option<usize>) -> Result<usize, CliError> {
        let default = std::thread::available_parallelism().map_or(1, usize::from);
        let w = pick(flag, self.file.workers, default);
        if w == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        Ok(w)
    }

    pub fn out(&self, flag: &Option<PathBuf>) -> PathBuf {
        pick(flag.clone(), self.file.out.clone(), PathBuf::from(DEFAULT_OUT))
    }

    pub fn data(&self, args: &DataArgs) -> Result<DataConfig, CliError> {
        let file = &self.file;
        let annotators = parse_with(
            args.annotators.clone().or(file.annotators.clone()),
            "annotators",
            |s| match s {
                "experts" | "expert" => Some(Annotators::Experts),
                "crowd" | "turkers" => Some(Annotators::Crowd),
                "all" => Some(Annotators::All),
                _ => None,
            },
        )?
        .unwrap_or_default();
        let severity_weights = match args.severity_weights.as_ref().or(file.severity_weights.as_ref()) {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => SeverityWeights::default(),
        };
        let kind: ProviderKind = args
            .provider
            .clone()
            .or(file.provider.kind.clone())
            .map(|s| s.parse::<ProviderKind>())
            .transpose()
            .map_err(config_err)?
            .unwrap_or(ProviderKind::File);
        let provider = match kind {
            ProviderKind::File => ProviderChoice::File,
            ProviderKind::Mock => ProviderChoice::Mock {
                seed: pick(args.mock_seed, file.provider.seed, 0),
                roughness: pick(args.mock_roughness, file.provider.roughness, DEFAULT_MOCK_ROUGHNESS),
            },
            ProviderKind::Http => {
                let section = |c: &Option<ProviderConfig>, role: Role| {
                    c.clone()
                        .ok_or_else(|| CliError::Config(format!("http provider needs a [provider.{role}] table")))
                };
                let expert = section(&file.provider.expert, Role::Expert)?;
                let amateur = section(&file.provider.amateur, Role::Amateur)?;
                for (c, role) in [(&expert, Role::Expert), (&amateur, Role::Amateur)] {
                    c.validate().map_err(config_err)?;
                    if c.role != role || c.kind != ProviderKind::Http {
                        return Err(CliError::Config(format!(
                            "[provider.{role}] must have role = \"{role}\" and kind = \"http\""
                        )));
                    }
                }
                ProviderChoice::Http {
                    expert: Box::new(expert),
                    amateur: Box::new(amateur),
                }
            }
        };
        Ok(DataConfig {
            manifests: pick_list(&args.manifests, &file.manifests),
            probs: pick_list(&args.probs, &file.probs),
            provider,
            annotators,
            severity_weights,
            strict_outputs: args.strict_outputs || file.strict_outputs.unwrap_or(false),
        })
    }

    /// Parsed scorer specs, falling back to `defaults`.
    pub fn scorers(&self, flag: &[String], defaults: &[&str]) -> Result<Vec<ScorerSpec>, CliError> {
        let mut raw = pick_list(flag, &self.file.scorers);
        if raw.is_empty() {
            raw = defaults.iter().map(|s| s.to_string()).collect();
        }
        let mut specs: Vec<ScorerSpec> = Vec::with_capacity(raw.len());
        for s in raw {
            let spec: ScorerSpec = s.parse().map_err(|e| CliError::Config(format!("scorer `{s}`: {e}")))?;
            if !specs.contains(&spec) {
                specs.push(spec);
            }
        }
        Ok(specs)
    }

    pub fn baselines(&self, flag: bool) -> bool {
        flag || self.file.baselines.unwrap_or(false)
    }

    pub fn tie_policy(&self, flag: &Option<String>) -> Result<TiePolicy, CliError> {
        flag.clone()
            .or(self.file.tie_policy.clone())
            .map(|s| s.parse::<TiePolicy>())
            .transpose()
            .map_err(config_err)
            .map(Option::unwrap_or_default)
    }

    pub fn correlation(&self, flag: &Option<String>) -> Result<CorrelationMode, CliError> {
        Ok(parse_with(
            flag.clone().or(self.file.correlation.clone()),
            "correlation mode",
            |s| match s {
                "pooled" => Some(CorrelationMode::Pooled),
                "per_system" | "per-system" => Some(CorrelationMode::PerSystem),
                _ => None,
            },
        )?
        .unwrap_or_default())
    }

    pub fn metaeval(&self, args: &EvaluateArgs) -> Result<MetaEvalConfig, CliError> {
        let grouping = parse_with(
            args.grouping.clone().or(self.file.grouping.clone()),
            "grouping",
            |s| match s {
                "within_segment" | "within-segment" | "segment" => Some(PairGrouping::WithinSegment),
                "global" => Some(PairGrouping::Global),
                _ => None,
            },
        )?
        .unwrap_or_default();
        let unfairness = parse_with(
            args.unfairness.clone().or(self.file.unfairness.clone()),
            "unfairness mode",
            |s| match s {
                "signed" => Some(UnfairnessMode::Signed),
                "absolute" | "abs" => Some(UnfairnessMode::Absolute),
                _ => None,
            },
        )?
        .unwrap_or_default();
        Ok(MetaEvalConfig {
            tie_policy: self.tie_policy(&args.tie_policy)?,
            grouping,
            correlation: self.correlation(&args.correlation)?,
            unfairness,
            likelihood_scorer: args.likelihood_scorer.clone().or(self.file.likelihood_scorer.clone()),
            scorers: None,
        })
    }
}

/// Parses `a,b,c` or `start:stop:step`. Grid points of the range form are
/// computed as `start + i * step` so no error accumulates.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("invalid sweep grid `{text}`"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let grid: Vec<f64> = if let [start, stop, step] = text.split(':').collect::<Vec<_>>()[..] {
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| start + i as f64 * step).collect()
    } else {
        text.split(',').map(num).collect::<Result<_, _>>()?
    };
    if grid.is_empty() || grid.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(CliError::Config(format!(
            "sweep grid values must lie in [0, 1]: `{text}`"
        )));
    }
    Ok(grid)
}

/// `i / 20` for `i = 0..=20`.
pub fn default_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}
