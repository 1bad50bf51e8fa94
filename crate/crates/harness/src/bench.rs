//! Paraphrase-identification benchmark of candidate evaluation metrics.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lectureqg_core::endpoint::EndpointConfig;
use lectureqg_core::metrics::{
    benchmark_markdown, group_by_source, load_pairs, paraphrase_benchmark, BenchmarkError, BenchmarkReport, BleuScorer,
    HttpNli, NliScorer, PairScorer, RougeLScorer, SimilarityScorer,
};

use crate::config::NliConfig;
use crate::{write_file, HarnessError};

/// Scorers that need no endpoint.
pub const LOCAL_SCORERS: [&str; 6] = ["rouge-l", "bleu-1", "bleu-2", "bleu-3", "bleu-4", "bleu"];

/// Builds a scorer by name. `nli` needs an NLI endpoint; any other
/// non-local name must be a configured similarity endpoint.
pub fn build_scorer(
    name: &str,
    nli: Option<&NliConfig>,
    similarity: &BTreeMap<String, EndpointConfig>,
) -> Result<Box<dyn PairScorer>, HarnessError> {
    let name = name.trim().to_ascii_lowercase();
    Ok(match name.as_str() {
        "rouge-l" | "rougel" => Box::new(RougeLScorer),
        "bleu" => Box::new(BleuScorer::new(4)),
        "nli" => {
            let n = nli.ok_or_else(|| HarnessError::Usage("scorer nli needs an NLI endpoint (config [nli] or LQG_NLI_ENDPOINT)".into()))?;
            Box::new(NliScorer {
                backend: Arc::new(HttpNli::new(n.endpoint.clone())),
                mode: n.mode,
            })
        }
        other => {
            if let Some(n) = other.strip_prefix("bleu-").and_then(|n| n.parse::<usize>().ok()).filter(|n| (1..=4).contains(n)) {
                Box::new(BleuScorer::new(n))
            } else if let Some(cfg) = similarity.get(other) {
                Box::new(SimilarityScorer::new(other, cfg.clone()))
            } else {
                return Err(BenchmarkError::UnknownScorer(other.to_string()).into());
            }
        }
    })
}

/// Runs every scorer over every pair source and returns the reports in
/// (scorer, source) order plus the Markdown tables.
pub async fn cmd_benchmark_metrics(
    pair_files: &[PathBuf],
    scorers: &[Box<dyn PairScorer>],
    threshold: f64,
    concurrency: usize,
    out: Option<&Path>,
) -> Result<(Vec<BenchmarkReport>, String), HarnessError> {
    if pair_files.is_empty() {
        return Err(HarnessError::Usage("at least one pairs file is required".into()));
    }
    if scorers.is_empty() {
        return Err(HarnessError::Usage("at least one scorer is required".into()));
    }
    if !threshold.is_finite() {
        return Err(HarnessError::Usage(format!("threshold must be finite, got {threshold}")));
    }
    let mut pairs = Vec::new();
    for f in pair_files {
        if !f.exists() {
            return Err(HarnessError::Missing {
                what: "pairs file",
                path: f.clone(),
            });
        }
        pairs.extend(load_pairs(f)?);
    }
    let sources = group_by_source(pairs);
    let mut reports = Vec::new();
    for scorer in scorers {
        for group in sources.values() {
            reports.push(paraphrase_benchmark(group, scorer.as_ref(), threshold, concurrency).await?);
        }
    }
    let md = benchmark_markdown(&reports);
    if let Some(dir) = out {
        write_file(&dir.join("benchmark.md"), md.as_bytes())?;
        let mut json = serde_json::to_vec_pretty(&reports).expect("reports serialize");
        json.push(b'\n');
        write_file(&dir.join("benchmark.json"), &json)?;
    }
    Ok((reports, md))
}
