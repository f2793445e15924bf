use contrastscore::metaeval::{evaluate, MetaEvalConfig, TiePolicy};
use contrastscore_bench::scored_corpus;
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn meta_evaluation(c: &mut Criterion) {
    let (instances, table) = scored_corpus(100, 16);
    let mut group = c.benchmark_group("evaluate_1600");
    for (name, policy) in [
        ("exclude_ties", TiePolicy::ExcludeHumanTies),
        ("tie_calibrated", TiePolicy::TieCalibrated),
    ] {
        let config = MetaEvalConfig {
            tie_policy: policy,
            ..MetaEvalConfig::default()
        };
        group.bench_function(name, |b| b.iter(|| evaluate(black_box(&instances), &table, &config)));
    }
    group.finish();
}

criterion_group!(benches, meta_evaluation);
criterion_main!(benches);
