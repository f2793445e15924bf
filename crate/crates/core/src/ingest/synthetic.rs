//! Writers for synthetic corpora in the on-disk layouts the loaders read,
//! at any size. Useful for exercising the pipeline without the real data.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::IngestError;

const WORDS: [&str; 24] = [
    "the", "council", "report", "river", "city", "team", "market", "study", "found", "said", "new", "plan", "water",
    "school", "season", "price", "rose", "fell", "after", "before", "local", "health", "court", "law",
];

fn sentence(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn write(path: &Path, text: &str) -> Result<(), IngestError> {
    std::fs::write(path, text).map_err(|e| IngestError::io(path, e))
}

/// `articles × systems` SummEval records; returns the manifest path.
pub fn write_summeval(dir: &Path, articles: usize, systems: usize, seed: u64) -> Result<PathBuf, IngestError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = ["coherence", "consistency", "fluency", "relevance"];
    let mut out = String::new();
    for a in 0..articles {
        let article = sentence(&mut rng, 30);
        let reference = sentence(&mut rng, 12);
        for s in 0..systems {
            let ann = |rng: &mut ChaCha8Rng| {
                let m: serde_json::Map<String, serde_json::Value> = dims
                    .iter()
                    .map(|d| (d.to_string(), serde_json::json!(rng.random_range(1..=5) as f64)))
                    .collect();
                serde_json::Value::Object(m)
            };
            let experts: Vec<_> = (0..3).map(|_| ann(&mut rng)).collect();
            let turkers: Vec<_> = (0..5).map(|_| ann(&mut rng)).collect();
            let rec = serde_json::json!({
                "id": format!("dm-test-{a:05}"),
                "model_id": format!("M{s}"),
                "decoded": sentence(&mut rng, 15),
                "expert_annotations": experts,
                "turker_annotations": turkers,
                "references": [reference],
                "text": article,
            });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
    }
    write(&dir.join("summeval.jsonl"), &out)?;
    let manifest = dir.join("summeval.toml");
    write(
        &manifest,
        "dataset_id = \"summeval\"\ntask = \"summarization\"\nformat = \"summeval\"\n\
         dimensions = [\"coherence\", \"consistency\", \"fluency\", \"relevance\"]\n\n\
         [paths]\nannotations = \"summeval.jsonl\"\n",
    )?;
    Ok(manifest)
}

/// `n` QAGS summaries with one to three sentences each.
pub fn write_qags(dir: &Path, n: usize, seed: u64) -> Result<PathBuf, IngestError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for _ in 0..n {
        let sentences: Vec<_> = (0..rng.random_range(1..=3))
            .map(|_| {
                let responses: Vec<_> = (0..3)
                    .map(|w| serde_json::json!({"worker_id": w, "response": if rng.random_bool(0.7) { "yes" } else { "no" }}))
                    .collect();
                serde_json::json!({"sentence": sentence(&mut rng, 10), "responses": responses})
            })
            .collect();
        let rec = serde_json::json!({"article": sentence(&mut rng, 40), "summary_sentences": sentences});
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    write(&dir.join("qags.jsonl"), &out)?;
    let manifest = dir.join("qags.toml");
    write(
        &manifest,
        "dataset_id = \"qags-xsum\"\ntask = \"summarization\"\nformat = \"qags\"\n\
         dimensions = [\"factuality\"]\n\n[paths]\nannotations = \"qags.jsonl\"\n",
    )?;
    Ok(manifest)
}

/// A full MQM grid: every system annotated on every segment by one rater.
pub fn write_mqm(
    dir: &Path,
    source_lang: &str,
    target_lang: &str,
    segments: usize,
    systems: usize,
    seed: u64,
) -> Result<PathBuf, IngestError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lp = format!("{source_lang}{target_lang}");
    let mut out = String::from("system\tdoc\tseg_id\trater\tsource\ttarget\tcategory\tseverity\n");
    for seg in 1..=segments {
        let source = sentence(&mut rng, 8);
        for sys in 0..systems {
            let target = sentence(&mut rng, 8);
            let (cat, sev) = match rng.random_range(0..3) {
                0 => ("No-error", "No-error"),
                1 => ("Fluency/Grammar", "Minor"),
                _ => ("Accuracy/Mistranslation", "Major"),
            };
            let _ = writeln!(
                out,
                "sys{sys:02}\tdoc{}\t{seg}\trater1\t{source}\t{target}\t{cat}\t{sev}",
                seg / 10
            );
        }
    }
    let data = format!("mqm22-{lp}.tsv");
    write(&dir.join(&data), &out)?;
    let manifest = dir.join(format!("mqm22-{lp}.toml"));
    write(
        &manifest,
        &format!(
            "dataset_id = \"mqm22-{lp}\"\ntask = \"translation\"\nformat = \"mqm\"\n\
             language_pair = [\"{source_lang}\", \"{target_lang}\"]\ndimensions = [\"mqm\"]\n\n\
             [paths]\nannotations = \"{data}\"\n"
        ),
    )?;
    Ok(manifest)
}
