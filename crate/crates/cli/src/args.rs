use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};

/// Contrastive expert/amateur scoring and meta-evaluation.
#[derive(Debug, Parser)]
#[command(name = "contrastscore", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for scoring and statistics.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Raise log verbosity (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every instance with every scorer.
    Score(ScoreArgs),
    /// Correlation, pairwise accuracy and bias against human scores.
    Evaluate(EvaluateArgs),
    /// Likelihood bias only.
    Bias(EvaluateArgs),
    /// Correlation as a function of gamma.
    Sweep(SweepArgs),
    /// Scoring throughput.
    Bench(BenchArgs),
    /// Per-token breakdown and ranks for one segment.
    CaseStudy(CaseStudyArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Dataset manifest (repeatable).
    #[arg(long = "manifest")]
    pub manifests: Vec<PathBuf>,
    /// Token-probability interchange file (repeatable).
    #[arg(long = "probs")]
    pub probs: Vec<PathBuf>,
    /// Where token probabilities come from: file, mock or http.
    #[arg(long)]
    pub provider: Option<String>,
    /// TOML table of MQM severity and category penalties.
    #[arg(long)]
    pub severity_weights: Option<PathBuf>,
    /// SummEval annotators to average: experts, crowd or all.
    #[arg(long)]
    pub annotators: Option<String>,
    /// Fail instead of skipping system outputs that are missing.
    #[arg(long)]
    pub strict_outputs: bool,
    /// Seed for the mock provider.
    #[arg(long)]
    pub mock_seed: Option<u64>,
    /// Divergence between mock expert and amateur, in [0, 1].
    #[arg(long)]
    pub mock_roughness: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Scorer spec, e.g. contrast:gamma=0.1:weighting=mean:base=10 (repeatable).
    #[arg(long = "scorer")]
    pub scorers: Vec<String>,
    /// Also compute BLEU, chrF and ROUGE where references exist.
    #[arg(long)]
    pub baselines: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the token probabilities used to tokenprobs.jsonl.
    #[arg(long)]
    pub dump_probs: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub score: ScoreArgs,
    /// Precomputed score file, ours or an external metric's (repeatable).
    #[arg(long = "scores")]
    pub score_files: Vec<PathBuf>,
    /// exclude_human_ties or tie_calibrated.
    #[arg(long)]
    pub tie_policy: Option<String>,
    /// within_segment or global.
    #[arg(long)]
    pub grouping: Option<String>,
    /// pooled or per_system.
    #[arg(long)]
    pub correlation: Option<String>,
    /// signed or absolute.
    #[arg(long)]
    pub unfairness: Option<String>,
    /// Score column used as the likelihood in bias.
    #[arg(long)]
    pub likelihood_scorer: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// contrast or ensemble_weighted.
    #[arg(long)]
    pub target: Option<String>,
    /// Comma-separated values or start:stop:step.
    #[arg(long)]
    pub sweep_grid: Option<String>,
    /// Base spec whose gamma is varied.
    #[arg(long = "scorer")]
    pub scorer: Option<String>,
    /// Tie policy for pairwise accuracy.
    #[arg(long)]
    pub tie_policy: Option<String>,
    /// Correlation granularity.
    #[arg(long)]
    pub correlation: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Scorer spec to time (repeatable).
    #[arg(long = "scorer")]
    pub scorers: Vec<String>,
    /// Samples per batch.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Untimed batches per scorer.
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Synthetic workload size when no data is given.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Tokens per synthetic hypothesis.
    #[arg(long)]
    pub length: Option<usize>,
    /// Timed rounds, alternating scorer order.
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Time interchange parsing and alignment too.
    #[arg(long)]
    pub end_to_end: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CaseStudyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// dataset_id/segment_id; a trailing /system_id is ignored.
    #[arg(long)]
    pub key: String,
    /// Contrast spec to break down.
    #[arg(long = "scorer")]
    pub scorer: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
