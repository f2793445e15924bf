use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use contrastscore::bench::{run_bench_rounds, BenchError, Workload, DEFAULT_WARMUP_BATCHES};
use contrastscore::case_study::{case_study, CaseStudy, CaseStudyError};
use contrastscore::ingest::read_text;
use contrastscore::metaeval::{evaluate, MetaEvalConfig, MetaReport, AVERAGE_ALL};
use contrastscore::{InstanceKey, Role, ScoreRecord, ScoreTable, ScorerKind, ScorerSpec, TokenProbRecord};
use serde::Serialize;

use crate::args::{BenchArgs, CaseStudyArgs, EvaluateArgs, ScoreArgs, SweepArgs};
use crate::config::{default_grid, parse_grid, DataConfig, ProviderChoice, Resolver, DEFAULT_SCORERS};
use crate::error::{config_err, data_err, CliError, EXIT_DATA, EXIT_OK};
use crate::pipeline::{load_corpus, score_units, units, Corpus, Issue, ProbSource, ScoreOutcome, BASELINE_IDS};
use crate::report::{
    ensure_dir, fmt3, metric_grid, tagged, unix_now, write_jsonl, write_lines, write_metadata, write_text, GridCell,
    RunMetadata, TextTable, SCHEMA_VERSION,
};

/// What a command produced: its exit code and text for stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub stdout: String,
}

/// Shared context for one invocation.
pub struct Context<'a> {
    pub resolver: &'a Resolver,
    pub workers: usize,
    pub argv: Vec<String>,
}

impl Context<'_> {
    fn metadata<C: Serialize>(
        &self,
        out: &Path,
        command: &str,
        started: f64,
        config: &C,
        counts: BTreeMap<&'static str, usize>,
        warnings: &[String],
    ) -> Result<(), CliError> {
        write_metadata(
            out,
            &RunMetadata {
                tool: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                command,
                argv: self.argv.clone(),
                started_unix: started,
                finished_unix: unix_now(),
                workers: self.workers,
                config,
                counts,
                warnings,
            },
        )
    }
}

fn has_prob_input(data: &DataConfig, corpus: &Corpus) -> bool {
    !data.probs.is_empty()
        || data.provider != ProviderChoice::File
        || corpus.manifests.iter().any(|m| m.optional_path("tokenprobs").is_some())
}

fn write_scores(out: &Path, outcome: &ScoreOutcome, dump_probs: bool) -> Result<(), CliError> {
    write_jsonl(
        &out.join("scores.jsonl"),
        outcome.table.to_records(Some(SCHEMA_VERSION)),
    )?;
    write_jsonl(
        &out.join("errors.jsonl"),
        outcome.issues.iter().map(|i| tagged("issue", i)),
    )?;
    if dump_probs {
        let mut records = Vec::new();
        for p in &outcome.probs {
            for seq in [&p.expert, &p.amateur]
                .into_iter()
                .flatten()
                .filter_map(|r| r.as_ref().ok())
            {
                records.push(TokenProbRecord::from_sequence(&p.key, seq));
            }
        }
        write_jsonl(&out.join("tokenprobs.jsonl"), records)?;
    }
    Ok(())
}

fn score_summary(table: &ScoreTable, order: &[String], issues: &[Issue]) -> TextTable {
    let mut rows = Vec::new();
    for id in order {
        let col = table.column(id);
        let vals: Vec<f64> = col.values().copied().collect();
        let failed = issues
            .iter()
            .filter(|i| i.scorer_id.as_deref() == Some(id.as_str()))
            .count();
        rows.push(vec![
            id.clone(),
            vals.len().to_string(),
            failed.to_string(),
            crate::report::mean(&vals).map_or("-".into(), |m| format!("{m:.4}")),
        ]);
    }
    TextTable {
        title: "Scores".into(),
        headers: vec!["scorer".into(), "scored".into(), "failed".into(), "mean".into()],
        rows,
    }
}

fn hard_error_exit(outcome: &ScoreOutcome, out: &Path, stdout: &mut String) -> i32 {
    let hard = outcome.hard_errors();
    if hard > 0 {
        eprintln!("{hard} instance error(s); see {}", out.join("errors.jsonl").display());
        for i in outcome
            .issues
            .iter()
            .filter(|i| i.severity == crate::pipeline::Severity::Error)
            .take(5)
        {
            eprintln!("  {}: {}", i.kind, i.message);
        }
        stdout.push_str(&format!("{hard} instance error(s)\n"));
        EXIT_DATA
    } else {
        EXIT_OK
    }
}

#[derive(Serialize)]
struct ScoreRunConfig<'a> {
    data: &'a DataConfig,
    scorers: Vec<String>,
    baselines: bool,
    out: &'a Path,
}

fn ids(specs: &[ScorerSpec]) -> Vec<String> {
    specs.iter().map(ScorerSpec::id).collect()
}

pub fn cmd_score(ctx: &Context<'_>, args: &ScoreArgs) -> Result<Outcome, CliError> {
    let started = unix_now();
    let r = ctx.resolver;
    let data = r.data(&args.data)?;
    let specs = r.scorers(&args.scorers, &DEFAULT_SCORERS)?;
    let baselines = r.baselines(args.baselines);
    let out = r.out(&args.out);
    ensure_dir(&out)?;

    let corpus = load_corpus(&data)?;
    let source = ProbSource::build(&data, &corpus)?;
    let units = units(&corpus, &source);
    if units.is_empty() {
        return Err(CliError::Data("nothing to score".into()));
    }
    let outcome = score_units(&units, &source, &specs, baselines);
    write_scores(&out, &outcome, args.dump_probs)?;

    let mut order = ids(&specs);
    if baselines {
        order.extend(BASELINE_IDS.iter().map(|s| s.to_string()));
    }
    let summary = score_summary(&outcome.table, &order, &outcome.issues);
    write_text(&out.join("scores.txt"), &summary.to_string())?;
    let mut stdout = summary.to_string();
    let exit_code = hard_error_exit(&outcome, &out, &mut stdout);

    let counts = BTreeMap::from([
        ("instances", units.len()),
        ("scores", outcome.table.len()),
        ("issues", outcome.issues.len()),
        ("skipped_instances", corpus.skipped),
    ]);
    let cfg = ScoreRunConfig {
        data: &data,
        scorers: ids(&specs),
        baselines,
        out: &out,
    };
    ctx.metadata(&out, "score", started, &cfg, counts, &corpus.warnings)?;
    Ok(Outcome { exit_code, stdout })
}

fn read_score_files(paths: &[PathBuf]) -> Result<ScoreTable, CliError> {
    let mut records = Vec::new();
    for path in paths {
        let text = read_text(path).map_err(data_err)?;
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: ScoreRecord =
                serde_json::from_str(line).map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
            records.push(rec);
        }
    }
    ScoreTable::from_records(records).map_err(data_err)
}

/// Scores (if probabilities are available) and meta-evaluates.
struct Evaluated {
    corpus: Corpus,
    report: MetaReport,
    order: Vec<String>,
    outcome: Option<ScoreOutcome>,
    config: MetaEvalConfig,
    data: DataConfig,
}

fn run_evaluation(
    ctx: &Context<'_>,
    args: &EvaluateArgs,
    specs_override: Option<Vec<ScorerSpec>>,
) -> Result<Evaluated, CliError> {
    let r = ctx.resolver;
    let data = r.data(&args.score.data)?;
    let mut config = r.metaeval(args)?;
    let baselines = r.baselines(args.score.baselines);
    let corpus = load_corpus(&data)?;
    if corpus.manifests.is_empty() {
        return Err(CliError::Config(
            "evaluation needs at least one --manifest with human scores".into(),
        ));
    }
    let score_files: Vec<PathBuf> = args.score_files.clone();
    let external = read_score_files(&score_files)?;
    let mut order: Vec<String> = Vec::new();
    let mut table = ScoreTable::new();
    let mut outcome = None;

    if has_prob_input(&data, &corpus) || score_files.is_empty() {
        let specs = match specs_override {
            Some(s) => s,
            None => r.scorers(&args.score.scorers, &DEFAULT_SCORERS)?,
        };
        order = ids(&specs);
        let mut compute = specs.clone();
        if config.likelihood_scorer.is_none() {
            let ls = ScorerSpec::single(Role::Expert);
            config.likelihood_scorer = Some(ls.id());
            if !compute.contains(&ls) {
                compute.push(ls);
            }
        }
        let source = ProbSource::build(&data, &corpus)?;
        let units = units(&corpus, &source);
        let o = score_units(&units, &source, &compute, baselines);
        table.merge(o.table.clone());
        outcome = Some(o);
        if baselines {
            order.extend(BASELINE_IDS.iter().map(|s| s.to_string()));
        }
    }
    for id in external.scorer_ids() {
        if !order.contains(&id) {
            order.push(id);
        }
    }
    table.merge(external);
    config.scorers = Some(order.clone());

    let mut report = evaluate(&corpus.instances, &table, &config);
    report.skipped_instances = corpus.skipped;
    let mut warnings = corpus.warnings.clone();
    warnings.append(&mut report.warnings);
    report.warnings = warnings;
    Ok(Evaluated {
        corpus,
        report,
        order,
        outcome,
        config,
        data,
    })
}

fn correlation_cells(report: &MetaReport) -> Vec<GridCell> {
    report
        .correlations
        .iter()
        .map(|c| GridCell {
            dataset_id: c.dataset_id.clone(),
            dimension: c.dimension.clone(),
            scorer_id: c.scorer_id.clone(),
            value: c.coefficient,
        })
        .collect()
}

fn pairwise_cells(report: &MetaReport) -> Vec<GridCell> {
    report
        .pairwise
        .iter()
        .map(|c| GridCell {
            dataset_id: c.dataset_id.clone(),
            dimension: c.dimension.clone(),
            scorer_id: c.scorer_id.clone(),
            value: c.accuracy,
        })
        .collect()
}

fn bias_cells(report: &MetaReport) -> Vec<GridCell> {
    report
        .bias
        .iter()
        .map(|c| GridCell {
            dataset_id: c.dataset_id.clone(),
            dimension: c.dimension.clone(),
            scorer_id: c.scorer_id.clone(),
            value: c.bias,
        })
        .collect()
}

#[derive(Serialize)]
struct EvalRunConfig<'a> {
    data: &'a DataConfig,
    metaeval: &'a MetaEvalConfig,
    scorers: &'a [String],
    score_files: &'a [PathBuf],
    out: &'a Path,
}

#[derive(Serialize)]
struct Warning<'a> {
    message: &'a str,
}

pub fn cmd_evaluate(ctx: &Context<'_>, args: &EvaluateArgs, bias_only: bool) -> Result<Outcome, CliError> {
    let started = unix_now();
    let out = ctx.resolver.out(&args.score.out);
    ensure_dir(&out)?;
    let ev = run_evaluation(ctx, args, None)?;
    let report = &ev.report;

    let mut lines: Vec<String> = Vec::new();
    let push = |lines: &mut Vec<String>, v: serde_json::Result<String>| {
        lines.push(v.expect("report rows serialize"));
    };
    if !bias_only {
        for c in &report.correlations {
            push(&mut lines, serde_json::to_string(&tagged("correlation", c)));
        }
        for p in &report.pairwise {
            push(&mut lines, serde_json::to_string(&tagged("pairwise", p)));
        }
    }
    for b in &report.bias {
        push(&mut lines, serde_json::to_string(&tagged("bias", b)));
    }
    if !bias_only {
        for a in &report.averages {
            push(&mut lines, serde_json::to_string(&tagged("average", a)));
        }
    }
    for w in &report.warnings {
        push(
            &mut lines,
            serde_json::to_string(&tagged("warning", &Warning { message: w })),
        );
    }

    let mut text = String::new();
    if !bias_only {
        text.push_str(&metric_grid("Pearson correlation", &correlation_cells(report), &ev.order).to_string());
        text.push('\n');
        text.push_str(&metric_grid("Pairwise accuracy", &pairwise_cells(report), &ev.order).to_string());
        text.push('\n');
    }
    let ls = ev.config.likelihood_scorer.as_deref().unwrap_or("-");
    text.push_str(&metric_grid(&format!("BiasScore (likelihood: {ls})"), &bias_cells(report), &ev.order).to_string());
    if !report.warnings.is_empty() {
        text.push_str(&format!(
            "\n{} warning(s); see the structured report\n",
            report.warnings.len()
        ));
    }

    let stem = if bias_only { "bias" } else { "report" };
    write_lines(&out.join(format!("{stem}.jsonl")), &lines)?;
    write_text(&out.join(format!("{stem}.txt")), &text)?;
    let mut stdout = text;
    let exit_code = match &ev.outcome {
        Some(o) => {
            write_scores(&out, o, args.score.dump_probs)?;
            hard_error_exit(o, &out, &mut stdout)
        }
        None => EXIT_OK,
    };
    let counts = BTreeMap::from([
        ("instances", ev.corpus.instances.len()),
        ("correlations", report.correlations.len()),
        ("pairwise", report.pairwise.len()),
        ("bias", report.bias.len()),
        ("skipped_instances", report.skipped_instances),
    ]);
    let cfg = EvalRunConfig {
        data: &ev.data,
        metaeval: &ev.config,
        scorers: &ev.order,
        score_files: &args.score_files,
        out: &out,
    };
    ctx.metadata(
        &out,
        if bias_only { "bias" } else { "evaluate" },
        started,
        &cfg,
        counts,
        &report.warnings,
    )?;
    Ok(Outcome { exit_code, stdout })
}

#[derive(Serialize)]
struct SweepPoint<'a> {
    target: &'a str,
    gamma: f64,
    scorer_id: &'a str,
    dataset_id: &'a str,
    dimension: &'a str,
    coefficient: f64,
}

#[derive(Serialize)]
struct SweepMean<'a> {
    target: &'a str,
    gamma: f64,
    scorer_id: &'a str,
    mean: Option<f64>,
    cells: usize,
    argmax: bool,
}

#[derive(Serialize)]
struct SweepRunConfig<'a> {
    data: &'a DataConfig,
    metaeval: &'a MetaEvalConfig,
    target: &'a str,
    base_scorer: String,
    grid: &'a [f64],
    out: &'a Path,
}

pub fn cmd_sweep(ctx: &Context<'_>, args: &SweepArgs) -> Result<Outcome, CliError> {
    let started = unix_now();
    let r = ctx.resolver;
    let out = r.out(&args.out);
    ensure_dir(&out)?;
    let target = args
        .target
        .clone()
        .or(r.file.target.clone())
        .unwrap_or_else(|| "contrast".into());
    let kind: ScorerKind = target.parse().map_err(config_err)?;
    let base = match &args.scorer {
        Some(s) => s
            .parse::<ScorerSpec>()
            .map_err(|e| CliError::Config(format!("scorer `{s}`: {e}")))?,
        None => match kind {
            ScorerKind::Contrast => ScorerSpec::contrast(0.1),
            ScorerKind::EnsembleWeighted => ScorerSpec::ensemble_weighted(0.5),
            _ => {
                return Err(CliError::Config(format!(
                    "cannot sweep `{target}`; use contrast or ensemble_weighted"
                )))
            }
        },
    };
    if base.kind != kind || !matches!(kind, ScorerKind::Contrast | ScorerKind::EnsembleWeighted) {
        return Err(CliError::Config(format!(
            "sweep target `{target}` does not match scorer `{}`",
            base.id()
        )));
    }
    let grid = match args.sweep_grid.as_ref().or(r.file.sweep_grid.as_ref()) {
        Some(g) => parse_grid(g)?,
        None => default_grid(),
    };
    let specs: Vec<ScorerSpec> = grid.iter().map(|&g| base.clone().with_gamma(g)).collect();

    let eval_args = EvaluateArgs {
        score: crate::args::ScoreArgs {
            data: args.data.clone(),
            ..Default::default()
        },
        tie_policy: args.tie_policy.clone(),
        correlation: args.correlation.clone(),
        ..Default::default()
    };
    let ev = run_evaluation(ctx, &eval_args, Some(specs.clone()))?;
    let target_name = kind.as_str();

    let means: Vec<(f64, String, Option<f64>, usize)> = grid
        .iter()
        .zip(&specs)
        .map(|(&g, s)| {
            let id = s.id();
            let avg = ev
                .report
                .averages
                .iter()
                .find(|a| a.scorer_id == id && a.scope == AVERAGE_ALL);
            (g, id, avg.map(|a| a.mean), avg.map_or(0, |a| a.cells))
        })
        .collect();
    // First maximum wins, so ties go to the smaller gamma.
    let argmax = means
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.2.map(|v| (i, v)))
        .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i);

    let mut lines = Vec::new();
    for (g, id, _, _) in &means {
        for c in ev.report.correlations.iter().filter(|c| &c.scorer_id == id) {
            lines.push(
                serde_json::to_string(&tagged(
                    "sweep_point",
                    &SweepPoint {
                        target: target_name,
                        gamma: *g,
                        scorer_id: id,
                        dataset_id: &c.dataset_id,
                        dimension: &c.dimension,
                        coefficient: c.coefficient,
                    },
                ))
                .expect("serializes"),
            );
        }
    }
    for (i, (g, id, m, cells)) in means.iter().enumerate() {
        lines.push(
            serde_json::to_string(&tagged(
                "sweep_mean",
                &SweepMean {
                    target: target_name,
                    gamma: *g,
                    scorer_id: id,
                    mean: *m,
                    cells: *cells,
                    argmax: argmax == Some(i),
                },
            ))
            .expect("serializes"),
        );
    }
    write_lines(&out.join("sweep.jsonl"), &lines)?;

    let mut cols: Vec<(String, String)> = ev
        .report
        .correlations
        .iter()
        .map(|c| (c.dataset_id.clone(), c.dimension.clone()))
        .collect();
    cols.sort();
    cols.dedup();
    let mut tsv = String::from("gamma\tmean");
    for (d, dim) in &cols {
        tsv.push_str(&format!("\t{d}:{dim}"));
    }
    tsv.push('\n');
    let mut table = TextTable {
        title: format!("{target_name} sweep (Pearson, * marks the best mean)"),
        headers: vec!["gamma".into(), "mean".into()],
        rows: Vec::new(),
    };
    table.headers.extend(cols.iter().map(|(d, dim)| format!("{d}:{dim}")));
    for (i, (g, id, m, _)) in means.iter().enumerate() {
        let mark = if argmax == Some(i) { "*" } else { "" };
        let mut row = vec![format!("{g}{mark}"), m.map_or("-".into(), fmt3)];
        tsv.push_str(&format!("{g}\t{}", m.map_or("nan".into(), |v| v.to_string())));
        for (d, dim) in &cols {
            let v = ev
                .report
                .correlations
                .iter()
                .find(|c| &c.scorer_id == id && &c.dataset_id == d && &c.dimension == dim)
                .map(|c| c.coefficient);
            row.push(v.map_or("-".into(), fmt3));
            tsv.push_str(&format!("\t{}", v.map_or("nan".into(), |v| v.to_string())));
        }
        tsv.push('\n');
        table.rows.push(row);
    }
    write_text(&out.join("sweep.tsv"), &tsv)?;
    write_text(&out.join("sweep.txt"), &table.to_string())?;
    let mut stdout = table.to_string();
    let exit_code = match &ev.outcome {
        Some(o) => {
            write_scores(&out, o, false)?;
            hard_error_exit(o, &out, &mut stdout)
        }
        None => EXIT_OK,
    };
    let cfg = SweepRunConfig {
        data: &ev.data,
        metaeval: &ev.config,
        target: target_name,
        base_scorer: base.id(),
        grid: &grid,
        out: &out,
    };
    let counts = BTreeMap::from([("grid_points", grid.len()), ("instances", ev.corpus.instances.len())]);
    ctx.metadata(&out, "sweep", started, &cfg, counts, &ev.report.warnings)?;
    Ok(Outcome { exit_code, stdout })
}

#[derive(Serialize)]
struct BenchRunConfig<'a> {
    scorers: Vec<String>,
    batch_size: usize,
    warmup_batches: usize,
    rounds: usize,
    end_to_end: bool,
    workload: &'a str,
    samples: usize,
    length: Option<usize>,
    out: &'a Path,
}

pub const BENCH_DEFAULT_SCORERS: [&str; 3] = ["single:role=expert", "contrast:gamma=0.1", "ensemble_avg"];
pub const BENCH_DEFAULT_BATCH: usize = 16;
pub const BENCH_DEFAULT_SAMPLES: usize = 4096;
pub const BENCH_DEFAULT_LENGTH: usize = 32;
pub const BENCH_DEFAULT_ROUNDS: usize = 3;

pub fn cmd_bench(ctx: &Context<'_>, args: &BenchArgs) -> Result<Outcome, CliError> {
    let started = unix_now();
    let r = ctx.resolver;
    let f = &r.file;
    let out = r.out(&args.out);
    ensure_dir(&out)?;
    let specs = r.scorers(&args.scorers, &BENCH_DEFAULT_SCORERS)?;
    let batch_size = args.batch_size.or(f.batch_size).unwrap_or(BENCH_DEFAULT_BATCH);
    let warmup = args.warmup.or(f.warmup).unwrap_or(DEFAULT_WARMUP_BATCHES);
    let rounds = args.rounds.or(f.rounds).unwrap_or(BENCH_DEFAULT_ROUNDS);
    let data = r.data(&args.data)?;
    let from_data = !data.manifests.is_empty() || !data.probs.is_empty() || data.provider != ProviderChoice::File;

    let (workload, label, length) = if from_data {
        let corpus = load_corpus(&data)?;
        let source = ProbSource::build(&data, &corpus)?;
        let units = units(&corpus, &source);
        let outcome = score_units(&units, &source, &[ScorerSpec::contrast(0.1)], false);
        let pairs: Vec<_> = outcome.probs.iter().filter_map(|p| p.pair().ok()).collect();
        if pairs.len() < units.len() {
            log::warn!(
                "{} of {} instances have no aligned pair and are left out",
                units.len() - pairs.len(),
                units.len()
            );
        }
        (Workload::Pairs(pairs), "data", None)
    } else {
        let samples = args.samples.or(f.samples).unwrap_or(BENCH_DEFAULT_SAMPLES);
        let length = args.length.or(f.length).unwrap_or(BENCH_DEFAULT_LENGTH);
        (Workload::synthetic(samples, length, 0.5), "synthetic", Some(length))
    };
    let workload = if args.end_to_end {
        workload.into_end_to_end()
    } else {
        workload
    };
    let samples = workload.len();
    let report = run_bench_rounds(&workload, &specs, batch_size, warmup, rounds).map_err(|e| match e {
        BenchError::InsufficientWorkload { .. } | BenchError::BatchSize | BenchError::NoScorers => config_err(e),
        other => data_err(other),
    })?;

    let mut lines = Vec::new();
    for b in &report.results {
        lines.push(serde_json::to_string(&tagged("bench_result", b)).expect("serializes"));
    }
    for ratio in &report.ratios {
        lines.push(serde_json::to_string(&tagged("bench_ratio", ratio)).expect("serializes"));
    }
    write_lines(&out.join("bench.jsonl"), &lines)?;
    let table = TextTable {
        title: format!(
            "Throughput ({label} workload, {}, batch {batch_size})",
            if args.end_to_end { "end to end" } else { "scoring only" }
        ),
        headers: ["scorer", "samples", "wall s", "samples/s", "ratio"]
            .map(String::from)
            .to_vec(),
        rows: report
            .results
            .iter()
            .zip(&report.ratios)
            .map(|(b, q)| {
                vec![
                    b.scorer_id.clone(),
                    b.sample_count.to_string(),
                    format!("{:.6}", b.wall_time),
                    format!("{:.1}", b.samples_per_second),
                    format!("{:.3}", q.ratio),
                ]
            })
            .collect(),
    };
    write_text(&out.join("bench.txt"), &table.to_string())?;
    let cfg = BenchRunConfig {
        scorers: ids(&specs),
        batch_size,
        warmup_batches: warmup,
        rounds,
        end_to_end: args.end_to_end,
        workload: label,
        samples,
        length,
        out: &out,
    };
    ctx.metadata(
        &out,
        "bench",
        started,
        &cfg,
        BTreeMap::from([("samples", samples)]),
        &[],
    )?;
    Ok(Outcome {
        exit_code: EXIT_OK,
        stdout: table.to_string(),
    })
}

fn prob_cell(p: f64) -> String {
    if p == 0.0 || p >= 1e-3 {
        format!("{p:.4}")
    } else {
        format!("{p:.3e}")
    }
}

/// Per-token table in the layout of the case-study report.
pub fn render_case_study(cs: &CaseStudy) -> String {
    let mut s = format!(
        "Segment {}/{}  scorer {}\n\n",
        cs.dataset_id, cs.segment_id, cs.scorer_id
    );
    for h in &cs.hypotheses {
        let mut headers = vec![h.key.system_id.clone(), "tokens".to_owned()];
        headers.extend(h.tokens.iter().cloned());
        headers.extend(["mean log".to_owned(), "rank".to_owned()]);
        let row = |name: &str, probs: &[f64], mean: f64, rank: usize| {
            let mut r = vec![String::new(), name.to_owned()];
            r.extend(probs.iter().map(|&p| prob_cell(p)));
            r.extend([format!("{mean:.3}"), rank.to_string()]);
            r
        };
        let t = TextTable {
            title: String::new(),
            headers,
            rows: vec![
                row("expert", &h.expert, h.expert_mean_log, h.expert_rank),
                row("amateur", &h.amateur, h.amateur_mean_log, h.amateur_rank),
                row("contrast", &h.contrast, h.contrast_mean_log, h.contrast_rank),
            ],
        };
        s.push_str(&t.to_string());
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct CaseRunConfig<'a> {
    data: &'a DataConfig,
    key: &'a str,
    scorer: String,
    out: &'a Path,
}

pub fn parse_segment_key(text: &str) -> Result<InstanceKey, CliError> {
    let parts: Vec<&str> = text.split('/').collect();
    match parts[..] {
        [d, s] | [d, s, _] if !d.is_empty() && !s.is_empty() => {
            Ok(InstanceKey::new(d, s, parts.get(2).copied().unwrap_or("")))
        }
        _ => Err(CliError::Config(format!("key `{text}` must be dataset_id/segment_id"))),
    }
}

pub fn cmd_case_study(ctx: &Context<'_>, args: &CaseStudyArgs) -> Result<Outcome, CliError> {
    let started = unix_now();
    let r = ctx.resolver;
    let out = r.out(&args.out);
    ensure_dir(&out)?;
    let key = parse_segment_key(&args.key)?;
    let spec: ScorerSpec = match &args.scorer {
        Some(s) => s.parse().map_err(|e| CliError::Config(format!("scorer `{s}`: {e}")))?,
        None => ScorerSpec::contrast(0.1),
    };
    if spec.kind != ScorerKind::Contrast {
        return Err(CliError::Config(format!(
            "case study needs a contrast scorer, got `{}`",
            spec.id()
        )));
    }
    let data = r.data(&args.data)?;
    let corpus = load_corpus(&data)?;
    let source = ProbSource::build(&data, &corpus)?;
    let selected: Vec<_> = units(&corpus, &source)
        .into_iter()
        .filter(|u| u.key.dataset_id == key.dataset_id && u.key.segment_id == key.segment_id)
        .collect();
    let outcome = score_units(&selected, &source, std::slice::from_ref(&spec), false);
    let mut pairs = Vec::new();
    for p in &outcome.probs {
        pairs.push(
            p.pair()
                .map_err(|(kind, msg)| CliError::Data(format!("{kind}: {msg}")))?,
        );
    }
    let cs = case_study(&pairs, &key, &spec).map_err(|e| match e {
        CaseStudyError::UnknownInstance { .. } => data_err(e),
        other => config_err(other),
    })?;
    write_jsonl(&out.join("case_study.jsonl"), [tagged("case_study", &cs)])?;
    let text = render_case_study(&cs);
    write_text(&out.join("case_study.txt"), &text)?;
    let cfg = CaseRunConfig {
        data: &data,
        key: &args.key,
        scorer: spec.id(),
        out: &out,
    };
    ctx.metadata(
        &out,
        "case-study",
        started,
        &cfg,
        BTreeMap::from([("hypotheses", cs.hypotheses.len())]),
        &[],
    )?;
    Ok(Outcome {
        exit_code: EXIT_OK,
        stdout: text,
    })
}
