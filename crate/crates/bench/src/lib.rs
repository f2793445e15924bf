//! Shared workloads for the criterion benchmarks under `benches/`.

use contrastscore::ingest::synthetic::write_summeval;
use contrastscore::ingest::{load_dataset, DatasetManifest, LoadOptions};
use contrastscore::provider::mock_generate;
use contrastscore::{score_pairs, validate_alignment, AlignedPair, EvaluationInstance, Role, ScoreTable, ScorerSpec};

pub fn pairs(samples: usize, length: usize) -> Vec<AlignedPair> {
    (0..samples as u64).map(|s| mock_generate(s, length, 0.5)).collect()
}

pub fn scorers() -> Vec<ScorerSpec> {
    vec![
        ScorerSpec::single(Role::Expert),
        ScorerSpec::contrast(0.1),
        ScorerSpec::ensemble_avg(),
        ScorerSpec::cd_score(5),
        ScorerSpec::division(),
    ]
}

/// A synthetic SummEval-shaped corpus scored with mock probabilities.
pub fn scored_corpus(articles: usize, systems: usize) -> (Vec<EvaluationInstance>, ScoreTable) {
    let dir = tempfile::tempdir().expect("temp dir");
    let manifest = write_summeval(dir.path(), articles, systems, 7).expect("synthetic corpus");
    let manifest = DatasetManifest::load(&manifest).expect("manifest");
    let instances = load_dataset(&manifest, &LoadOptions::default())
        .expect("corpus")
        .instances;
    let aligned: Vec<_> = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let (_, e, a) = mock_generate(i as u64, 48, 0.5).into_parts();
            validate_alignment(inst.key(), e, a).expect("aligned")
        })
        .collect();
    let (table, _) = score_pairs(&aligned, &[ScorerSpec::contrast(0.1), ScorerSpec::single(Role::Expert)]);
    (instances, table)
}
