//! Paraphrase-discrimination benchmark for candidate QG metrics.
//!
//! Each scorer rates labeled question pairs; a pair is predicted to be a
//! paraphrase when its score reaches the threshold. Reported per scorer:
//! F1 on the paraphrase class and accuracy, at the fixed threshold and at
//! the best threshold found by a sweep over the observed scores.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use super::nli::{nli_score, NliBackend, NliMode};
use super::overlap::{bleu, rouge_l};
use crate::endpoint::{EndpointConfig, EndpointError, JsonEndpoint};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("no pairs to score")]
    Empty,
    #[error("scorer {scorer}: every pair failed to score")]
    AllUnscored { scorer: String },
    #[error("unknown scorer {0:?}")]
    UnknownScorer(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPair {
    pub q1: String,
    pub q2: String,
    #[serde(deserialize_with = "label_from_any")]
    pub label: bool,
    #[serde(default)]
    pub source: String,
}

fn label_from_any<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Bool(bool),
        Int(i64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Bool(b) => Ok(b),
        Raw::Int(1) => Ok(true),
        Raw::Int(0) => Ok(false),
        Raw::Text(s) => match s.trim().to_ascii_lowercase().as_str() {
            "1" | "true" | "paraphrase" | "duplicate" | "yes" => Ok(true),
            "0" | "false" | "not-paraphrase" | "not_paraphrase" | "not-duplicate" | "no" => Ok(false),
            other => Err(serde::de::Error::custom(format!("unrecognized label {other:?}"))),
        },
        Raw::Int(n) => Err(serde::de::Error::custom(format!("label must be 0 or 1, got {n}"))),
    }
}

/// Reads pairs from `.jsonl` (one object per line) or `.tsv` (header row
/// `q1 q2 label [source]`). A missing source defaults to the file stem.
pub fn load_pairs(path: &Path) -> Result<Vec<BenchmarkPair>, BenchmarkError> {
    let io = |source| BenchmarkError::Io {
        path: path.to_path_buf(),
        source,
    };
    let parse = |line: usize, message: String| BenchmarkError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut pairs = Vec::new();
    if path.extension().is_some_and(|e| e == "tsv") {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .quoting(false)
            .from_path(path)
            .map_err(|e| parse(0, e.to_string()))?;
        for (i, row) in reader.deserialize::<BenchmarkPair>().enumerate() {
            pairs.push(row.map_err(|e| parse(i + 2, e.to_string()))?);
        }
    } else {
        let text = std::fs::read_to_string(path).map_err(io)?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            pairs.push(serde_json::from_str(line).map_err(|e| parse(i + 1, e.to_string()))?);
        }
    }
    for (i, p) in pairs.iter_mut().enumerate() {
        if p.q1.trim().is_empty() || p.q2.trim().is_empty() {
            return Err(parse(i + 1, "empty question".into()));
        }
        if p.source.is_empty() {
            p.source = stem.clone();
        }
    }
    Ok(pairs)
}

pub fn group_by_source(pairs: Vec<BenchmarkPair>) -> BTreeMap<String, Vec<BenchmarkPair>> {
    let mut out: BTreeMap<String, Vec<BenchmarkPair>> = BTreeMap::new();
    for p in pairs {
        out.entry(p.source.clone()).or_default().push(p);
    }
    out
}

#[async_trait]
pub trait PairScorer: Send + Sync {
    fn name(&self) -> &str;
    async fn score(&self, a: &str, b: &str) -> Result<f64, EndpointError>;
}

pub struct RougeLScorer;

#[async_trait]
impl PairScorer for RougeLScorer {
    fn name(&self) -> &str {
        "rouge-l"
    }
    async fn score(&self, a: &str, b: &str) -> Result<f64, EndpointError> {
        Ok(rouge_l(a, b))
    }
}

pub struct BleuScorer {
    pub n: usize,
    name: String,
}

impl BleuScorer {
    pub fn new(n: usize) -> Self {
        BleuScorer {
            n,
            name: if n == 4 { "bleu".into() } else { format!("bleu-{n}") },
        }
    }
}

#[async_trait]
impl PairScorer for BleuScorer {
    fn name(&self) -> &str {
        &self.name
    }
    async fn score(&self, a: &str, b: &str) -> Result<f64, EndpointError> {
        Ok(bleu(a, b, self.n))
    }
}

pub struct NliScorer {
    pub backend: Arc<dyn NliBackend>,
    pub mode: NliMode,
}

#[async_trait]
impl PairScorer for NliScorer {
    fn name(&self) -> &str {
        "nli"
    }
    async fn score(&self, a: &str, b: &str) -> Result<f64, EndpointError> {
        nli_score(a, b, self.backend.as_ref(), self.mode).await
    }
}

/// Baseline similarity served over HTTP (BERTScore, ParaScore):
/// `POST {"candidate", "reference"}` → `{"score"}`.
pub struct SimilarityScorer {
    name: String,
    endpoint: JsonEndpoint,
}

impl SimilarityScorer {
    pub fn new(name: impl Into<String>, config: EndpointConfig) -> Self {
        SimilarityScorer {
            name: name.into(),
            endpoint: JsonEndpoint::new(config),
        }
    }
}

#[derive(Serialize)]
struct SimilarityRequest<'a> {
    candidate: &'a str,
    reference: &'a str,
}

#[derive(Deserialize)]
struct SimilarityReply {
    score: f64,
}

#[async_trait]
impl PairScorer for SimilarityScorer {
    fn name(&self) -> &str {
        &self.name
    }
    async fn score(&self, a: &str, b: &str) -> Result<f64, EndpointError> {
        let r: SimilarityReply = self.endpoint.post(&SimilarityRequest { candidate: a, reference: b }).await?;
        Ok(r.score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn at(scored: &[(f64, bool)], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for &(s, label) in scored {
            match (s >= threshold, label) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// F1 of the positive class; 0 when there are no positives at all.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / self.total() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub threshold: f64,
    pub confusion: Confusion,
    pub f1: f64,
    pub accuracy: f64,
}

impl ThresholdResult {
    pub fn at(scored: &[(f64, bool)], threshold: f64) -> Self {
        let confusion = Confusion::at(scored, threshold);
        ThresholdResult {
            threshold,
            confusion,
            f1: confusion.f1(),
            accuracy: confusion.accuracy(),
        }
    }
}

/// Best threshold by F1 (then accuracy, then the lower threshold) among the
/// observed scores.
pub fn sweep_threshold(scored: &[(f64, bool)]) -> Option<ThresholdResult> {
    let mut candidates: Vec<f64> = scored.iter().map(|(s, _)| *s).filter(|s| s.is_finite()).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best: Option<ThresholdResult> = None;
    for t in candidates {
        let r = ThresholdResult::at(scored, t);
        let better = match &best {
            None => true,
            Some(b) => r.f1 > b.f1 || (r.f1 == b.f1 && r.accuracy > b.accuracy),
        };
        if better {
            best = Some(r);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub scorer: String,
    pub source: String,
    pub pairs: usize,
    pub unscored: usize,
    pub fixed: ThresholdResult,
    pub best: ThresholdResult,
}

/// Scores every pair and evaluates the predictions. Pairs whose scoring
/// fails are excluded and counted in `unscored`.
pub async fn paraphrase_benchmark(
    pairs: &[BenchmarkPair],
    scorer: &dyn PairScorer,
    threshold: f64,
    concurrency: usize,
) -> Result<BenchmarkReport, BenchmarkError> {
    if pairs.is_empty() {
        return Err(BenchmarkError::Empty);
    }
    let results: Vec<Option<(f64, bool)>> = stream::iter(pairs)
        .map(|p| async move {
            match scorer.score(&p.q1, &p.q2).await {
                Ok(s) if s.is_finite() => Some((s, p.label)),
                Ok(s) => {
                    log::warn!("{}: non-finite score {s}", scorer.name());
                    None
                }
                Err(e) => {
                    log::warn!("{}: {e}", scorer.name());
                    None
                }
            }
        })
        .buffered(concurrency.max(1))
        .collect()
        .await;
    let scored: Vec<(f64, bool)> = results.iter().flatten().copied().collect();
    let best = sweep_threshold(&scored).ok_or_else(|| BenchmarkError::AllUnscored {
        scorer: scorer.name().to_string(),
    })?;
    Ok(BenchmarkReport {
        scorer: scorer.name().to_string(),
        source: pairs[0].source.clone(),
        pairs: pairs.len(),
        unscored: pairs.len() - scored.len(),
        fixed: ThresholdResult::at(&scored, threshold),
        best,
    })
}

/// Metrics as rows, one F1/Acc column pair per source, values ×100. The
/// fixed-threshold table comes first, then the swept one.
pub fn benchmark_markdown(reports: &[BenchmarkReport]) -> String {
    let sources: Vec<&str> = {
        let mut s: Vec<&str> = reports.iter().map(|r| r.source.as_str()).collect();
        s.sort();
        s.dedup();
        s
    };
    let scorers: Vec<&str> = {
        let mut seen = Vec::new();
        for r in reports {
            if !seen.contains(&r.scorer.as_str()) {
                seen.push(r.scorer.as_str());
            }
        }
        seen
    };
    let mut out = String::new();
    for (title, pick) in [
        ("fixed threshold", (|r: &BenchmarkReport| r.fixed) as fn(&BenchmarkReport) -> ThresholdResult),
        ("best threshold", |r: &BenchmarkReport| r.best),
    ] {
        out.push_str(&format!("### Paraphrase identification ({title})\n\n| Metric |"));
        for s in &sources {
            out.push_str(&format!(" {s} F1 | {s} Acc |"));
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|---:|".repeat(sources.len()));
        out.push('\n');
        for scorer in &scorers {
            out.push_str(&format!("| {scorer} |"));
            for s in &sources {
                match reports.iter().find(|r| r.scorer == *scorer && r.source == *s) {
                    Some(r) => {
                        let t = pick(r);
                        out.push_str(&format!(" {:.2} | {:.2} |", t.f1 * 100.0, t.accuracy * 100.0));
                    }
                    None => out.push_str(" – | – |"),
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    let thresholds: Vec<String> = reports
        .iter()
        .map(|r| format!("{}/{}: fixed {:.3}, best {:.4}", r.scorer, r.source, r.fixed.threshold, r.best.threshold))
        .collect();
    out.push_str(&format!("Thresholds: {}.\n", thresholds.join("; ")));
    let unscored: Vec<String> = reports
        .iter()
        .filter(|r| r.unscored > 0)
        .map(|r| format!("{}/{}: {} of {}", r.scorer, r.source, r.unscored, r.pairs))
        .collect();
    if !unscored.is_empty() {
        out.push_str(&format!("Unscored pairs (excluded): {}.\n", unscored.join("; ")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(q1: &str, q2: &str, label: bool) -> BenchmarkPair {
        BenchmarkPair {
            q1: q1.into(),
            q2: q2.into(),
            label,
            source: "fixture".into(),
        }
    }

    #[test]
    fn confusion_examples() {
        let perfect = [(0.9, true), (0.8, true), (0.1, false), (0.2, false)];
        let r = ThresholdResult::at(&perfect, 0.5);
        assert_eq!((r.f1, r.accuracy), (1.0, 1.0));

        let all_pos = [(0.9, true), (0.8, true), (0.7, false), (0.6, false)];
        let r = ThresholdResult::at(&all_pos, 0.5);
        assert_eq!(r.accuracy, 0.5);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.confusion, Confusion { tp: 2, fp: 2, tn: 0, fn_: 0 });
    }

    #[test]
    fn sweep_finds_separating_threshold() {
        let s = [(0.9, true), (0.8, true), (0.7, false), (0.6, false)];
        let best = sweep_threshold(&s).unwrap();
        assert_eq!(best.threshold, 0.8);
        assert_eq!(best.f1, 1.0);
        assert!(sweep_threshold(&[]).is_none());
    }

    #[tokio::test]
    async fn rouge_benchmark_on_fixture() {
        let pairs = vec![
            pair("what is relu", "what is relu", true),
            pair("what does relu do", "what is relu used for", true),
            pair("what is relu", "who invented backpropagation", false),
            pair("define a tensor", "define a matrix", false),
        ];
        let r = paraphrase_benchmark(&pairs, &RougeLScorer, 0.5, 2).await.unwrap();
        // scores: 1.0, 0.444…, 0.0, 0.666… → predictions T F F T
        assert_eq!(r.fixed.confusion, Confusion { tp: 1, fp: 1, tn: 1, fn_: 1 });
        assert_eq!(r.unscored, 0);
        assert!(paraphrase_benchmark(&[], &RougeLScorer, 0.5, 1).await.is_err());
    }

    #[test]
    fn load_jsonl_and_tsv() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("meq.jsonl");
        std::fs::write(
            &j,
            "{\"q1\":\"a?\",\"q2\":\"b?\",\"label\":1}\n\n{\"q1\":\"c?\",\"q2\":\"d?\",\"label\":\"not-paraphrase\"}\n",
        )
        .unwrap();
        let p = load_pairs(&j).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p[0].label && !p[1].label);
        assert_eq!(p[0].source, "meq");

        let t = dir.path().join("qqp.tsv");
        std::fs::write(&t, "q1\tq2\tlabel\nwhat \"x\"?\twhat y?\t0\nz?\tz?\ttrue\n").unwrap();
        let p = load_pairs(&t).unwrap();
        assert_eq!(p[0].q1, "what \"x\"?");
        assert!(p[1].label);

        std::fs::write(&j, "{\"q1\":\"\",\"q2\":\"b\",\"label\":1}\n").unwrap();
        assert!(load_pairs(&j).is_err());
    }

    #[test]
    fn markdown_layout() {
        let r = BenchmarkReport {
            scorer: "rouge-l".into(),
            source: "MEQ".into(),
            pairs: 4,
            unscored: 1,
            fixed: ThresholdResult::at(&[(0.9, true), (0.1, false)], 0.5),
            best: ThresholdResult::at(&[(0.9, true), (0.1, false)], 0.9),
        };
        let md = benchmark_markdown(&[r]);
        assert!(md.contains("| Metric | MEQ F1 | MEQ Acc |"));
        assert!(md.contains("| rouge-l | 100.00 | 100.00 |"));
        assert!(md.contains("Unscored pairs (excluded): rouge-l/MEQ: 1 of 4."));
    }
}
