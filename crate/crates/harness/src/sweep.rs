//! Rule-k window sweep.
//!
//! Runs Rule-k for each k, plots mean NLI@5 against k per (model,
//! modality), and records the best k as that pair's Rule-Best window.

use std::path::Path;

use lectureqg_core::context::{ContextStrategy, Modality, Selection};
use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::plot::{line_chart, Series};
use crate::run::{collect_units, execute_units, ExecStats, RunOptions};
use crate::{read_file, write_file, HarnessError};

pub const RULE_BEST_FILE: &str = "rule_best.json";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_SVG: &str = "sweep.svg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleBestEntry {
    pub model: String,
    pub modality: Modality,
    pub k: usize,
    pub nli_at5: f64,
}

/// Rule-Best windows per (model, modality).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleBestTable {
    #[serde(default)]
    pub ks: Vec<usize>,
    pub entries: Vec<RuleBestEntry>,
}

impl RuleBestTable {
    pub fn lookup(&self, model: &str, modality: Modality) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.model == model && e.modality == modality)
            .map(|e| e.k)
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        serde_json::from_str(&read_file(path)?).map_err(|e| HarnessError::Usage(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub model: String,
    pub modality: Modality,
    pub k: usize,
    /// Items with questions.
    pub items: usize,
    pub nli_scored: usize,
    pub nli_at5: Option<f64>,
    pub rouge_l_at5: Option<f64>,
    pub rquge_at5: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub rule_best: RuleBestTable,
    pub stats: ExecStats,
}

fn mean(xs: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let v: Vec<f64> = xs.flatten().collect();
    ((!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64), v.len())
}

/// Best k by mean NLI@5; ties go to the smaller window.
pub fn argmax_k(points: &[&SweepPoint]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for p in points {
        if let Some(v) = p.nli_at5 {
            let better = match best {
                None => true,
                Some((bk, bv)) => v > bv || (v == bv && p.k < bk),
            };
            if better {
                best = Some((p.k, v));
            }
        }
    }
    best
}

pub fn sweep_strategies(ks: &[usize], modalities: &[Modality]) -> Result<Vec<ContextStrategy>, HarnessError> {
    let mut out = Vec::new();
    for &m in modalities.iter().filter(|m| **m != Modality::Both) {
        for &k in ks {
            out.push(ContextStrategy::new(Selection::Rule(k), false, m).map_err(HarnessError::Usage)?);
        }
    }
    Ok(out)
}

/// Runs the sweep (reusing finished units) and writes `sweep.csv`,
/// `sweep.svg` and `rule_best.json` into `out`.
pub async fn cmd_sweep_window(
    engine: &Engine,
    ks: &[usize],
    modalities: &[Modality],
    out: &Path,
) -> Result<SweepResult, HarnessError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(HarnessError::Usage("window sizes must be a non-empty list of positive integers".into()));
    }
    let strategies = sweep_strategies(ks, modalities)?;
    if strategies.is_empty() {
        return Err(HarnessError::Usage("the sweep needs the transcript or keyframes modality".into()));
    }
    let stats = execute_units(engine, &strategies, out, RunOptions::default()).await?;
    let models = engine.model_names();
    let records = collect_units(&engine.corpus, &models, &strategies, out)?;

    let mut points = Vec::new();
    for model in &models {
        for s in &strategies {
            let Selection::Rule(k) = s.selection else { continue };
            let ok: Vec<_> = records
                .iter()
                .filter(|r| &r.model == model && r.strategy == *s && r.scores.failed.is_none())
                .collect();
            let (nli_at5, nli_scored) = mean(ok.iter().map(|r| r.scores.nli_at5));
            points.push(SweepPoint {
                model: model.clone(),
                modality: s.modality,
                k,
                items: ok.len(),
                nli_scored,
                nli_at5,
                rouge_l_at5: mean(ok.iter().map(|r| r.scores.rouge_l_at5)).0,
                rquge_at5: mean(ok.iter().map(|r| r.scores.rquge_at5)).0,
            });
        }
    }

    let mut rule_best = RuleBestTable {
        ks: ks.to_vec(),
        entries: Vec::new(),
    };
    let mut series = Vec::new();
    for model in &models {
        for &m in modalities.iter().filter(|m| **m != Modality::Both) {
            let curve: Vec<&SweepPoint> = points.iter().filter(|p| &p.model == model && p.modality == m).collect();
            let best = argmax_k(&curve);
            match best {
                Some((k, v)) => rule_best.entries.push(RuleBestEntry {
                    model: model.clone(),
                    modality: m,
                    k,
                    nli_at5: v,
                }),
                None => log::warn!("{model} {m}: no NLI@5 scores, Rule-Best left unset"),
            }
            let pts: Vec<(f64, f64)> = curve
                .iter()
                .filter_map(|p| p.nli_at5.map(|v| (p.k as f64, v * 100.0)))
                .collect();
            if !pts.is_empty() {
                series.push(Series {
                    name: format!("{model} ({m})"),
                    points: pts,
                    highlight: best.map(|(k, v)| (k as f64, v * 100.0)),
                });
            }
        }
    }

    write_file(&out.join(SWEEP_CSV), sweep_csv(&points, &rule_best).as_bytes())?;
    let svg = line_chart("NLI@5 by context window", "window size k", "NLI@5", &series);
    write_file(&out.join(SWEEP_SVG), svg.as_bytes())?;
    let mut json = serde_json::to_vec_pretty(&rule_best).expect("table serializes");
    json.push(b'\n');
    write_file(&out.join(RULE_BEST_FILE), &json)?;
    Ok(SweepResult {
        points,
        rule_best,
        stats,
    })
}

/// One row per (model, modality, k); NLI and ROUGE-L ×100.
pub fn sweep_csv(points: &[SweepPoint], best: &RuleBestTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "modality", "k", "items", "nli_scored", "nli_at5", "rouge_l_at5", "rquge_at5", "rule_best"])
        .expect("in-memory write");
    let f = |v: Option<f64>, scale: f64| v.map(|v| format!("{:.4}", v * scale)).unwrap_or_default();
    for p in points {
        let is_best = best.lookup(&p.model, p.modality) == Some(p.k);
        w.write_record([
            p.model.clone(),
            p.modality.to_string(),
            p.k.to_string(),
            p.items.to_string(),
            p.nli_scored.to_string(),
            f(p.nli_at5, 100.0),
            f(p.rouge_l_at5, 100.0),
            f(p.rquge_at5, 1.0),
            is_best.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
