//! Strategy × metric tables in the layout of the results tables: one
//! section per modality, strategies as rows, (model × metric) as columns.

use serde::Serialize;

use super::score::ItemScores;
use crate::context::{ContextStrategy, Modality};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricCell {
    pub mean: Option<f64>,
    /// Items that contributed to the mean.
    pub scored: usize,
}

impl MetricCell {
    fn of(values: impl Iterator<Item = Option<f64>>) -> Self {
        let xs: Vec<f64> = values.flatten().collect();
        MetricCell {
            mean: (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64),
            scored: xs.len(),
        }
    }

    fn display(&self, scale: f64) -> String {
        match self.mean {
            Some(m) => format!("{:.2}", m * scale),
            None => "n/a".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelCells {
    pub model: String,
    /// Items with a generated question set.
    pub items: usize,
    pub failed: usize,
    pub nli: MetricCell,
    pub rouge_l: MetricCell,
    pub rquge: MetricCell,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub strategy: ContextStrategy,
    pub label: String,
    pub cells: Vec<ModelCells>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub models: Vec<String>,
    pub sections: Vec<(Modality, Vec<ReportRow>)>,
}

fn section_title(m: Modality) -> &'static str {
    match m {
        Modality::Transcript => "Transcript",
        Modality::Keyframes => "Keyframes",
        Modality::Both => "Multimodal",
    }
}

/// Means per (strategy, model) over items that produced questions. Rows
/// follow `strategies`; columns follow `models`.
pub fn aggregate_report(scores: &[ItemScores], strategies: &[ContextStrategy], models: &[String]) -> Report {
    let mut sections: Vec<(Modality, Vec<ReportRow>)> = Vec::new();
    for modality in [Modality::Transcript, Modality::Keyframes, Modality::Both] {
        let rows: Vec<ReportRow> = strategies
            .iter()
            .filter(|s| s.modality == modality)
            .map(|&strategy| ReportRow {
                strategy,
                label: strategy.label(),
                cells: models
                    .iter()
                    .map(|model| {
                        let all: Vec<&ItemScores> =
                            scores.iter().filter(|s| s.strategy == strategy && &s.model == model).collect();
                        let ok: Vec<&ItemScores> = all.iter().copied().filter(|s| s.failed.is_none()).collect();
                        ModelCells {
                            model: model.clone(),
                            items: ok.len(),
                            failed: all.len() - ok.len(),
                            nli: MetricCell::of(ok.iter().map(|s| s.nli_at5)),
                            rouge_l: MetricCell::of(ok.iter().map(|s| s.rouge_l_at5)),
                            rquge: MetricCell::of(ok.iter().map(|s| s.rquge_at5)),
                        }
                    })
                    .collect(),
            })
            .collect();
        if !rows.is_empty() {
            sections.push((modality, rows));
        }
    }
    Report {
        models: models.to_vec(),
        sections,
    }
}

impl Report {
    /// NLI@5 and RougeL@5 ×100, RQUGE@5 as is, two decimals. Partial
    /// coverage is listed under the tables.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let mut notes = Vec::new();
        for (modality, rows) in &self.sections {
            out.push_str(&format!("## {}\n\n| Strategy |", section_title(*modality)));
            for m in &self.models {
                out.push_str(&format!(" {m} NLI@5 | {m} RougeL@5 | {m} RQUGE@5 |"));
            }
            out.push_str("\n|---|");
            out.push_str(&"---:|---:|---:|".repeat(self.models.len()));
            out.push('\n');
            for row in rows {
                out.push_str(&format!("| {} |", row.label));
                for c in &row.cells {
                    out.push_str(&format!(
                        " {} | {} | {} |",
                        c.nli.display(100.0),
                        c.rouge_l.display(100.0),
                        c.rquge.display(1.0)
                    ));
                    let where_ = format!("{} / {} / {}", section_title(*modality), row.label, c.model);
                    if c.failed > 0 {
                        notes.push(format!("{where_}: {} item(s) failed and are excluded", c.failed));
                    }
                    for (name, cell) in [("NLI", c.nli), ("RougeL", c.rouge_l), ("RQUGE", c.rquge)] {
                        if cell.scored < c.items {
                            notes.push(format!("{where_}: {name} unscored for {} of {} item(s)", c.items - cell.scored, c.items));
                        }
                    }
                }
                out.push('\n');
            }
            out.push('\n');
        }
        if !notes.is_empty() {
            out.push_str("Notes:\n");
            for n in notes {
                out.push_str(&format!("- {n}\n"));
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "modality", "strategy", "model", "items", "failed", "nli_at5", "rouge_l_at5", "rquge_at5", "nli_scored",
            "rouge_l_scored", "rquge_scored",
        ])
        .expect("in-memory write");
        for (modality, rows) in &self.sections {
            for row in rows {
                for c in &row.cells {
                    let fmt = |cell: MetricCell, scale: f64| cell.mean.map(|m| format!("{:.2}", m * scale)).unwrap_or_default();
                    w.write_record([
                        modality.as_str().to_string(),
                        row.label.clone(),
                        c.model.clone(),
                        c.items.to_string(),
                        c.failed.to_string(),
                        fmt(c.nli, 100.0),
                        fmt(c.rouge_l, 100.0),
                        fmt(c.rquge, 1.0),
                        c.nli.scored.to_string(),
                        c.rouge_l.scored.to_string(),
                        c.rquge.scored.to_string(),
                    ])
                    .expect("in-memory write");
                }
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}
