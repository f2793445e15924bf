//! One PASS/FAIL line per acceptance criterion, written straight to stderr so it
//! shows up without `--nocapture`.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use contrastscore::bench::{run_bench, run_bench_rounds, Workload};
use contrastscore::case_study::case_study;
use contrastscore::ingest::synthetic::{write_mqm, write_qags, write_summeval};
use contrastscore::ingest::{load_dataset, load_tokenprobs, DatasetManifest, LoadOptions};
use contrastscore::metaeval::{
    bias_score, evaluate, pairwise_accuracy, pearson, spearman, MetaEvalConfig, PairGrouping, PairwiseItem, TiePolicy,
    UnfairnessMode,
};
use contrastscore::provider::mock_generate;
use contrastscore::scorers::contrast_token_prob;
use contrastscore::{
    score_pair, score_pairs, validate_alignment, InstanceKey, LogBase, Role, ScorerSpec, TokenProb, TokenProbSequence,
};
use rand::Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture(name: &str) -> PathBuf {
    oracles::fixtures_dir().join(name).join("manifest.toml")
}

fn case_study_reproduction() -> Check {
    let start = Instant::now();
    let manifest = DatasetManifest::load(&fixture("case_study")).map_err(|e| e.to_string())?;
    let pairs: Vec<_> = load_tokenprobs(&[manifest.path("tokenprobs").unwrap()])
        .map_err(|e| e.to_string())?
        .into_values()
        .collect();
    let key = pairs[0].key().clone();
    let study = case_study(&pairs, &key, &ScorerSpec::contrast(0.1)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();

    ensure(study.hypotheses.len() == 3, || "expected three hypotheses".into())?;
    for (h, &(e, a, c)) in study.hypotheses.iter().zip(&oracles::CASE_STUDY_MEANS) {
        for (name, got, want) in [
            ("expert", h.expert_mean_log, e),
            ("amateur", h.amateur_mean_log, a),
            ("contrast", h.contrast_mean_log, c),
        ] {
            ensure((got - want).abs() <= 0.005, || {
                format!("{} {name} mean {got:.4} vs {want}", h.key.system_id)
            })?;
        }
    }
    let mut worst = 0.0f64;
    for (h, published) in study.hypotheses.iter().zip(oracles::CASE_STUDY_CONTRAST) {
        for ((&e, &a), &p) in h.expert.iter().zip(&h.amateur).zip(published) {
            worst = worst.max((contrast_token_prob(e, a, 0.1) - p).abs());
        }
    }
    ensure(worst <= 2e-3, || format!("per-token contrast off by {worst:.2e}"))?;
    let logo = contrast_token_prob(0.000457, 0.06592, 0.1);
    ensure((logo - 0.006134).abs() <= 1e-5, || format!("logo token {logo}"))?;
    let contrast_ranks: Vec<usize> = study.hypotheses.iter().map(|h| h.contrast_rank).collect();
    let expert_ranks: Vec<usize> = study.hypotheses.iter().map(|h| h.expert_rank).collect();
    ensure(contrast_ranks == [1, 2, 3], || {
        format!("contrast ranks {contrast_ranks:?}")
    })?;
    ensure(expert_ranks == [2, 1, 3], || format!("expert ranks {expert_ranks:?}"))?;

    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let run = cli(&[
        "case-study",
        "--manifest",
        p(&fixture("case_study")),
        "--key",
        "mqm23-zhen-case/0",
        "--out",
        p(dir.path()),
    ]);
    let cli_elapsed = start.elapsed().as_secs_f64();
    ensure(run == 0, || format!("case-study command exited {run}"))?;
    ensure(elapsed < 1.0 && cli_elapsed < 1.0, || {
        format!("took {elapsed:.3}s in-process, {cli_elapsed:.3}s via CLI")
    })?;
    Ok(format!(
        "means within 0.005, max token deviation {worst:.1e}, ranks contrast {contrast_ranks:?} expert {expert_ranks:?}, {:.1} ms in-process, {:.0} ms via CLI",
        elapsed * 1e3,
        cli_elapsed * 1e3
    ))
}

fn adversarial_pair(expert: &[f64], amateur: &[f64]) -> contrastscore::AlignedPair {
    let mk = |probs: &[f64], role: Role| {
        let tokens = probs
            .iter()
            .enumerate()
            .map(|(i, &p)| TokenProb::new(i as u32, "t", p).with_top_k(vec![(i % 2) as u32]))
            .collect();
        TokenProbSequence::new("m", role, 1.0, "tok", tokens).unwrap()
    };
    validate_alignment(
        InstanceKey::new("adv", "0", "x"),
        mk(expert, Role::Expert),
        mk(amateur, Role::Amateur),
    )
    .unwrap()
}

fn formula_equivalence() -> Check {
    let single_e = ScorerSpec::single(Role::Expert);
    let single_a = ScorerSpec::single(Role::Amateur);
    for seed in 0..1000u64 {
        let pair = mock_generate(seed, 1 + seed as usize % 64, (seed % 11) as f64 / 10.0);
        let s = |spec: &ScorerSpec| score_pair(&pair, spec).unwrap().to_bits();
        ensure(s(&ScorerSpec::contrast(0.0)) == s(&single_e), || {
            format!("gamma=0 differs on seed {seed}")
        })?;
        ensure(
            s(&ScorerSpec::ensemble_avg()) == s(&ScorerSpec::ensemble_weighted(0.5)),
            || format!("ensemble_avg differs on seed {seed}"),
        )?;
        ensure(s(&ScorerSpec::ensemble_weighted(1.0)) == s(&single_e), || {
            format!("gamma=1 endpoint, seed {seed}")
        })?;
        ensure(s(&ScorerSpec::ensemble_weighted(0.0)) == s(&single_a), || {
            format!("gamma=0 endpoint, seed {seed}")
        })?;
    }

    let edge = [0.0, 1.0, 1e-300, f64::MIN_POSITIVE, 0.5];
    let mut adversarial = 0;
    for gamma in [0.0, 0.1, 0.5, 1.0] {
        let mut cases = Vec::new();
        for &e in &edge {
            for &a in &edge {
                cases.push((vec![e, a, e], vec![a, e, a]));
            }
        }
        let amateur = vec![0.0, 0.3, 1.0, 0.9];
        cases.push((amateur.iter().map(|a| gamma * a).collect(), amateur));
        for (e, a) in cases {
            let pair = adversarial_pair(&e, &a);
            for spec in [
                single_e.clone(),
                single_a.clone(),
                ScorerSpec::contrast(gamma),
                ScorerSpec::ensemble_avg(),
                ScorerSpec::ensemble_weighted(gamma),
                ScorerSpec::cd_score(1),
                ScorerSpec::division(),
            ] {
                let v = score_pair(&pair, &spec).map_err(|e| e.to_string())?;
                ensure(v.is_finite(), || format!("{} gave {v} on {e:?}/{a:?}", spec.id()))?;
                adversarial += 1;
            }
        }
    }

    let manifest = DatasetManifest::load(&fixture("summeval")).unwrap();
    let data = load_dataset(&manifest, &LoadOptions::default()).unwrap();
    let pairs: Vec<_> = data
        .instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let (_, e, a) = mock_generate(i as u64, 10 + i % 7, 0.5).into_parts();
            validate_alignment(inst.key(), e, a).unwrap()
        })
        .collect();
    let ten = [ScorerSpec::contrast(0.1), ScorerSpec::single(Role::Expert)];
    let natural: Vec<_> = ten.iter().map(|s| s.clone().with_base(LogBase::Natural)).collect();
    let (t10, _) = score_pairs(&pairs, &ten);
    let (tn, _) = score_pairs(&pairs, &natural);
    let mut worst = 0.0f64;
    for policy in [TiePolicy::ExcludeHumanTies, TiePolicy::TieCalibrated] {
        let report = |table, spec: &ScorerSpec, scorer: &ScorerSpec| {
            evaluate(
                &data.instances,
                table,
                &MetaEvalConfig {
                    tie_policy: policy,
                    scorers: Some(vec![scorer.id()]),
                    likelihood_scorer: Some(spec.id()),
                    ..MetaEvalConfig::default()
                },
            )
        };
        let a = report(&t10, &ten[1], &ten[0]);
        let b = report(&tn, &natural[1], &natural[0]);
        ensure(a.correlations.len() == 4 && b.correlations.len() == 4, || {
            "missing correlation cells".into()
        })?;
        for (x, y) in a.correlations.iter().zip(&b.correlations) {
            worst = worst.max((x.coefficient - y.coefficient).abs());
            worst = worst.max((x.spearman.unwrap() - y.spearman.unwrap()).abs());
        }
        for (x, y) in a.pairwise.iter().zip(&b.pairwise) {
            worst = worst.max((x.accuracy - y.accuracy).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("log-base difference {worst:.2e}"))?;
    Ok(format!(
        "1000 mock pairs bit-identical for gamma=0 and ensemble identities, {adversarial} adversarial scores finite, base-ten vs natural max difference {worst:.1e}"
    ))
}

fn statistics_oracles() -> Check {
    let mut rng = oracles::rng(2024);
    let tol = 1e-10;
    let mut compared = BTreeMap::<&str, usize>::new();
    for case in 0..200 {
        let n = rng.random_range(2..=50);
        let ties = case % 3 == 0;
        let x = oracles::random_vector(&mut rng, n, ties);
        let y = oracles::random_vector(&mut rng, n, case % 4 == 0);
        let z = oracles::random_vector(&mut rng, n, false);
        let segs: Vec<String> = (0..n).map(|_| format!("s{}", rng.random_range(0..4))).collect();

        match (pearson(&x, &y), oracles::pearson(&x, &y)) {
            (Ok(a), Some(b)) if (a - b).abs() <= tol => *compared.entry("pearson").or_default() += 1,
            (Err(_), None) => {}
            other => return Err(format!("pearson case {case}: {other:?}")),
        }
        match (spearman(&x, &y), oracles::spearman(&x, &y)) {
            (Ok(a), Some(b)) if (a - b).abs() <= tol => *compared.entry("spearman").or_default() += 1,
            (Err(_), None) => {}
            other => return Err(format!("spearman case {case}: {other:?}")),
        }
        for (mode, abs) in [(UnfairnessMode::Signed, false), (UnfairnessMode::Absolute, true)] {
            match (bias_score(&z, &x, &y, mode), oracles::bias(&z, &x, &y, abs)) {
                (Ok(a), Some(b)) if (a.bias - b).abs() <= tol => *compared.entry("bias").or_default() += 1,
                (Err(_), None) => {}
                other => return Err(format!("bias case {case}: {other:?}")),
            }
        }
        let items: Vec<PairwiseItem<'_>> = (0..n)
            .map(|i| PairwiseItem {
                segment: &segs[i],
                metric: x[i],
                human: y[i],
            })
            .collect();
        let seg_refs: Vec<&str> = segs.iter().map(String::as_str).collect();
        for (grouping, within) in [(PairGrouping::WithinSegment, true), (PairGrouping::Global, false)] {
            let pairs = oracles::pairs(&seg_refs, &x, &y, within);
            match (
                pairwise_accuracy(&items, grouping, TiePolicy::ExcludeHumanTies),
                oracles::accuracy_excluding_ties(&pairs),
            ) {
                (Ok(a), Some(b)) if (a.accuracy - b).abs() <= tol && a.pairs_total == pairs.len() => {
                    *compared.entry("pairwise").or_default() += 1
                }
                (Err(_), None) => {}
                other => return Err(format!("pairwise case {case}: {other:?}")),
            }
            match (
                pairwise_accuracy(&items, grouping, TiePolicy::TieCalibrated),
                oracles::accuracy_tie_calibrated(&pairs),
            ) {
                (Ok(a), Some((b, eps))) if (a.accuracy - b).abs() <= tol && a.tie_epsilon == Some(eps) => {
                    *compared.entry("pairwise").or_default() += 1
                }
                (Err(_), None) => {}
                other => return Err(format!("tie-calibrated case {case}: {other:?}")),
            }
        }
    }
    Ok(format!(
        "200 instances (n <= 50) at 1e-10, defined comparisons {compared:?}"
    ))
}

fn ingest_counts() -> Check {
    let opts = LoadOptions::default();
    let load = |path: &Path| -> Result<Vec<contrastscore::EvaluationInstance>, String> {
        let m = DatasetManifest::load(path).map_err(|e| e.to_string())?;
        Ok(load_dataset(&m, &opts).map_err(|e| e.to_string())?.instances)
    };
    for (name, want) in [("summeval", 16), ("qags", 6), ("mqm", 12), ("case_study", 3)] {
        let got = load(&fixture(name))?.len();
        ensure(got == want, || {
            format!("fixture {name}: {got} instances, expected {want}")
        })?;
    }

    let dir = tempfile::tempdir().unwrap();
    let check_full = |summeval: &Path, qags: &Path, mqm: &dyn Fn(&str, &str) -> PathBuf| -> Result<(), String> {
        let s = load(summeval)?.len();
        ensure(s == oracles::SUMMEVAL_INSTANCES, || format!("SummEval {s}"))?;
        let q = load(qags)?.len();
        ensure(q == oracles::QAGS_INSTANCES, || format!("QAGS {q}"))?;
        for (src, tgt, segs) in oracles::MQM22_GRIDS {
            let grid = oracles::grid_size(&load(&mqm(src, tgt))?);
            ensure(grid == (segs, oracles::MQM22_SYSTEMS), || {
                format!("MQM {src}-{tgt} grid {grid:?}")
            })?;
        }
        Ok(())
    };
    let d = dir.path();
    let summeval = write_summeval(d, 100, 16, 1).map_err(|e| e.to_string())?;
    let qags = write_qags(d, oracles::QAGS_INSTANCES, 2).map_err(|e| e.to_string())?;
    for (src, tgt, segs) in oracles::MQM22_GRIDS {
        write_mqm(d, src, tgt, segs, oracles::MQM22_SYSTEMS, 3).map_err(|e| e.to_string())?;
    }
    check_full(&summeval, &qags, &|s, t| d.join(format!("mqm22-{s}{t}.toml")))?;

    let real = match std::env::var_os(oracles::CORPORA_ENV).map(PathBuf::from) {
        Some(root) => {
            check_full(&root.join("summeval.toml"), &root.join("qags.toml"), &|s, t| {
                root.join(format!("mqm22-{s}{t}.toml"))
            })?;
            format!("real corpora in {} verified", root.display())
        }
        None => format!(
            "real corpora not present locally (set {} to check them)",
            oracles::CORPORA_ENV
        ),
    };
    Ok(format!(
        "fixtures 16/6/12/3; full-size synthetic layouts give 1600 SummEval, 239 QAGS, MQM 1315/1875/1315 x 15; {real}"
    ))
}

fn cli(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_contrastscore"))
        .args(args)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "run_metadata.json")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let (s, q, m) = (fixture("summeval"), fixture("qags"), fixture("mqm"));
    let mut files = 0;
    for cmd in ["score", "evaluate"] {
        let mut first: Option<BTreeMap<String, Vec<u8>>> = None;
        for (i, workers) in ["1", "4", "8", "1", "4", "8"].iter().enumerate() {
            let out = dir.path().join(format!("{cmd}-{i}"));
            let code = cli(&[
                "--workers",
                workers,
                cmd,
                "--manifest",
                p(&s),
                "--manifest",
                p(&q),
                "--manifest",
                p(&m),
                "--provider",
                "mock",
                "--baselines",
                "--out",
                p(&out),
            ]);
            ensure(code == 0, || format!("{cmd} exited {code}"))?;
            let got = outputs(&out);
            match &first {
                None => {
                    files += got.len();
                    first = Some(got);
                }
                Some(f) => ensure(f == &got, || {
                    format!("{cmd} output differs with {workers} workers (run {i})")
                })?,
            }
        }
    }
    Ok(format!(
        "score and evaluate: {files} structured files byte-identical over 2 reruns x workers {{1, 4, 8}}"
    ))
}

fn bench_sanity() -> Check {
    let w = Workload::synthetic(2048, 32, 0.5);
    let specs = [
        ScorerSpec::single(Role::Expert),
        ScorerSpec::contrast(0.1),
        ScorerSpec::ensemble_avg(),
    ];
    let report = run_bench(&w, &specs, 16, 2).map_err(|e| e.to_string())?;
    for r in &report.results {
        ensure(r.batch_size == 16, || "batch size not recorded".into())?;
        let err = (r.samples_per_second - r.sample_count as f64 / r.wall_time).abs();
        ensure(err <= 1e-9, || {
            format!("{}: throughput arithmetic off by {err}", r.scorer_id)
        })?;
    }
    let Workload::Pairs(pairs) = &w else { unreachable!() };
    let (plain, _) = score_pairs(pairs, &specs);
    ensure(
        plain
            .iter()
            .all(|(k, id, s)| report.scores.get(k, id).map(f64::to_bits) == Some(s.to_bits())),
        || "bench scores differ from plain scores".into(),
    )?;

    let big = Workload::synthetic(8192, 32, 0.5);
    let spec = ScorerSpec::contrast(0.1);
    let twin = run_bench_rounds(&big, &[spec.clone(), spec], 16, 2, 5).map_err(|e| e.to_string())?;
    let ratio = twin.results[1].samples_per_second / twin.results[0].samples_per_second;
    ensure((0.8..=1.25).contains(&ratio), || format!("self ratio {ratio:.3}"))?;
    let doubling = oracles::bench_doubling_ratio(4096, 5);
    ensure((1.4..=2.6).contains(&doubling), || {
        format!("doubling ratio {doubling:.3}")
    })?;
    Ok(format!(
        "batch 16, samples/s = count / wall within 1e-9, self ratio {ratio:.3}, doubling ratio {doubling:.2}, bench scores bit-equal to plain runs"
    ))
}

fn report(line: &str) {
    let _ = writeln!(std::io::stderr().lock(), "{line}");
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 6] = [
        ("case-study numeric reproduction", case_study_reproduction),
        ("formula equivalence", formula_equivalence),
        ("statistics oracles", statistics_oracles),
        ("ingestion counts", ingest_counts),
        ("determinism", determinism),
        ("bench sanity", bench_sanity),
    ];
    let mut failed = Vec::new();
    report("");
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match outcome {
            Ok(detail) => report(&format!("PASS {name}: {detail}")),
            Err(why) => {
                report(&format!("FAIL {name}: {why}"));
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
