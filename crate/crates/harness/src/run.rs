//! The experiment executor.
//!
//! Every (model, strategy, item) is a unit whose result is written to its
//! own file as soon as it finishes. A rerun skips units that already have a
//! result, and model answers come from the response cache, so an
//! interrupted run resumes where it stopped and ends with the same outputs
//! as an uninterrupted one. Aggregated files are always rebuilt from the
//! unit files in corpus order.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use futures::stream::{self, TryStreamExt};
use lectureqg_core::context::{build_context, ContextBundle, ContextError, ContextStrategy, Selection};
use lectureqg_core::corpus::{to_jsonl, Corpus, Lecture, QuizItem};
use lectureqg_core::metrics::{aggregate_report, score_question_set, ItemScores, Report};
use lectureqg_core::qgen::{generate_questions, QgenError, QuestionSet};
use lectureqg_core::util::sanitize_component;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::engine::{Engine, Generator};
use crate::{read_file, write_file, HarnessError};

pub const UNITS_DIR: &str = "units";
pub const RUN_MANIFEST: &str = "run.json";

/// Everything one unit produced. Failed units keep whatever was built
/// before the failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub model: String,
    pub lecture_id: String,
    pub item_id: String,
    pub strategy: ContextStrategy,
    /// Window used for Rule-Best.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle: Option<ContextBundle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub questions: Option<QuestionSet>,
    pub scores: ItemScores,
    /// The failure came from the model service and is worth retrying.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub retryable: bool,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Recompute scores of finished units (e.g. after adding an endpoint).
    pub rescore: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ExecStats {
    pub units: usize,
    pub reused: usize,
    pub executed: usize,
    pub rescored: usize,
    pub failed: usize,
    /// Failed units that a rerun will retry.
    pub retryable: usize,
}

/// What `report` needs to rebuild a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub strategies: Vec<ContextStrategy>,
    pub models: Vec<String>,
}

pub fn unit_path(out: &Path, model: &str, strategy: &ContextStrategy, lecture_id: &str, item_id: &str) -> PathBuf {
    out.join(UNITS_DIR)
        .join(sanitize_component(model))
        .join(strategy.file_stem())
        .join(sanitize_component(lecture_id))
        .join(format!("{}.json", sanitize_component(item_id)))
}

struct Unit<'a> {
    generator: &'a Generator,
    strategy: ContextStrategy,
    lecture: &'a Lecture,
    item: &'a QuizItem,
}

fn units<'a>(engine: &'a Engine, strategies: &[ContextStrategy]) -> Vec<Unit<'a>> {
    let mut out = Vec::new();
    for generator in &engine.generators {
        for &strategy in strategies {
            for (lecture, item) in engine.corpus.items() {
                out.push(Unit {
                    generator,
                    strategy,
                    lecture,
                    item,
                });
            }
        }
    }
    out
}

fn read_unit(path: &Path) -> Result<Option<UnitRecord>, HarnessError> {
    if !path.exists() {
        return Ok(None);
    }
    let raw = read_file(path)?;
    match serde_json::from_str(&raw) {
        Ok(r) => Ok(Some(r)),
        Err(e) => {
            log::warn!("{}: unreadable unit result, recomputing: {e}", path.display());
            Ok(None)
        }
    }
}

fn failed(unit: &Unit, rule_k: Option<usize>, reason: String, retryable: bool) -> UnitRecord {
    UnitRecord {
        model: unit.generator.name.clone(),
        lecture_id: unit.lecture.id.clone(),
        item_id: unit.item.id.clone(),
        strategy: unit.strategy,
        rule_k,
        bundle: None,
        questions: None,
        scores: ItemScores::failed(unit.item, &unit.generator.name, unit.strategy, reason),
        retryable,
    }
}

async fn run_unit(engine: &Engine, unit: &Unit<'_>) -> UnitRecord {
    let client = &unit.generator.client;
    let settings = engine.settings_for(&unit.generator.name, unit.strategy.modality);
    let rule_k = (unit.strategy.selection == Selection::RuleBest).then_some(settings.rule_best_k);
    let bundle = match build_context(unit.lecture, unit.item, unit.strategy, client, &settings).await {
        Ok(b) => b,
        Err(e) => {
            let retryable = matches!(e, ContextError::Llm(_));
            return failed(unit, rule_k, format!("context: {e}"), retryable);
        }
    };
    let questions = match generate_questions(&bundle, unit.item, client).await {
        Ok(q) => q,
        Err(e) => {
            let retryable = matches!(e, QgenError::Llm(_));
            let mut r = failed(unit, rule_k, format!("generation: {e}"), retryable);
            r.bundle = Some(bundle);
            return r;
        }
    };
    let scores = score_question_set(&questions, unit.item, &bundle, &unit.generator.name, &engine.scoring).await;
    UnitRecord {
        model: unit.generator.name.clone(),
        lecture_id: unit.lecture.id.clone(),
        item_id: unit.item.id.clone(),
        strategy: unit.strategy,
        rule_k,
        bundle: Some(bundle),
        questions: Some(questions),
        scores,
        retryable: false,
    }
}

/// Runs every unit that has no usable result yet, `engine.workers` at a
/// time. Results are persisted one by one, so cancelling the returned
/// future loses at most the units in flight.
pub async fn execute_units(
    engine: &Engine,
    strategies: &[ContextStrategy],
    out: &Path,
    options: RunOptions,
) -> Result<ExecStats, HarnessError> {
    let units = units(engine, strategies);
    let total = units.len();
    let reused = AtomicUsize::new(0);
    let executed = AtomicUsize::new(0);
    let rescored = AtomicUsize::new(0);
    let failures = AtomicUsize::new(0);
    let retryable = AtomicUsize::new(0);

    stream::iter(units.iter().map(Ok::<_, HarnessError>))
        .try_for_each_concurrent(engine.workers.max(1), |unit| {
            let (reused, executed, rescored, failures, retryable) =
                (&reused, &executed, &rescored, &failures, &retryable);
            async move {
                let path = unit_path(out, &unit.generator.name, &unit.strategy, &unit.lecture.id, &unit.item.id);
                let wanted_k = (unit.strategy.selection == Selection::RuleBest)
                    .then(|| engine.settings_for(&unit.generator.name, unit.strategy.modality).rule_best_k);
                let record = match read_unit(&path)? {
                    Some(r) if !r.retryable && r.rule_k == wanted_k => {
                        match (options.rescore, &r.bundle, &r.questions) {
                            (true, Some(bundle), Some(questions)) => {
                                let mut r2 = r.clone();
                                r2.scores = score_question_set(
                                    questions,
                                    unit.item,
                                    bundle,
                                    &unit.generator.name,
                                    &engine.scoring,
                                )
                                .await;
                                rescored.fetch_add(1, Ordering::Relaxed);
                                r2
                            }
                            _ => {
                                reused.fetch_add(1, Ordering::Relaxed);
                                if r.scores.failed.is_some() {
                                    failures.fetch_add(1, Ordering::Relaxed);
                                }
                                return Ok(());
                            }
                        }
                    }
                    _ => {
                        let r = run_unit(engine, unit).await;
                        executed.fetch_add(1, Ordering::Relaxed);
                        r
                    }
                };
                if let Some(reason) = &record.scores.failed {
                    failures.fetch_add(1, Ordering::Relaxed);
                    if record.retryable {
                        retryable.fetch_add(1, Ordering::Relaxed);
                    }
                    log::warn!("{} {} {}: {reason}", record.model, record.strategy, record.item_id);
                } else {
                    log::info!("{} {} {}: done", record.model, record.strategy, record.item_id);
                }
                let mut body = serde_json::to_vec_pretty(&record).expect("unit record serializes");
                body.push(b'\n');
                write_file(&path, &body)
            }
        })
        .await?;

    Ok(ExecStats {
        units: total,
        reused: reused.into_inner(),
        executed: executed.into_inner(),
        rescored: rescored.into_inner(),
        failed: failures.into_inner(),
        retryable: retryable.into_inner(),
    })
}

/// Unit results in corpus order: models, then strategies, then items.
pub fn collect_units(
    corpus: &Corpus,
    models: &[String],
    strategies: &[ContextStrategy],
    out: &Path,
) -> Result<Vec<UnitRecord>, HarnessError> {
    let mut records = Vec::new();
    let mut missing = Vec::new();
    for model in models {
        for strategy in strategies {
            for (lecture, item) in corpus.items() {
                let path = unit_path(out, model, strategy, &lecture.id, &item.id);
                match read_unit(&path)? {
                    Some(r) => records.push(r),
                    None => missing.push(path),
                }
            }
        }
    }
    match missing.into_iter().next() {
        None => Ok(records),
        Some(first) => Err(HarnessError::Incomplete {
            missing: models.len() * strategies.len() * corpus.items().count() - records.len(),
            first,
        }),
    }
}

#[derive(Serialize)]
struct Row<'a, T: Serialize> {
    model: &'a str,
    strategy: &'a ContextStrategy,
    lecture_id: &'a str,
    item_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    rule_k: Option<usize>,
    #[serde(flatten)]
    payload: T,
}

fn row<T: Serialize>(r: &UnitRecord, payload: T) -> Row<'_, T> {
    Row {
        model: &r.model,
        strategy: &r.strategy,
        lecture_id: &r.lecture_id,
        item_id: &r.item_id,
        rule_k: r.rule_k,
        payload,
    }
}

#[derive(Serialize)]
struct BundleRow<'a> {
    bundle: &'a ContextBundle,
}

#[derive(Serialize)]
struct QuestionRow<'a> {
    questions: &'a QuestionSet,
}

pub const OUTPUT_FILES: [&str; 6] =
    ["bundles.jsonl", "questions.jsonl", "scores.jsonl", "report.md", "report.csv", "report.json"];

/// Rebuilds the aggregated outputs from the unit files.
pub fn assemble(
    corpus: &Corpus,
    models: &[String],
    strategies: &[ContextStrategy],
    out: &Path,
) -> Result<Report, HarnessError> {
    let records = collect_units(corpus, models, strategies, out)?;
    let bundles: Vec<_> = records
        .iter()
        .filter_map(|r| Some(row(r, BundleRow { bundle: r.bundle.as_ref()? })))
        .collect();
    let questions: Vec<_> = records
        .iter()
        .filter_map(|r| Some(row(r, QuestionRow { questions: r.questions.as_ref()? })))
        .collect();
    let scores: Vec<ItemScores> = records.iter().map(|r| r.scores.clone()).collect();
    let report = aggregate_report(&scores, strategies, models);

    let mut md = format!(
        "# Question generation results\n\nCorpus: {} ({} lecture(s), {} item(s))\n\n",
        corpus.course,
        corpus.entries.len(),
        corpus.items().count()
    );
    let windows = rule_best_windows(&records);
    if !windows.is_empty() {
        md.push_str(&format!("Rule-Best windows: {}.\n\n", windows.join("; ")));
    }
    md.push_str(&report.to_markdown());

    write_file(&out.join("bundles.jsonl"), to_jsonl(&bundles).as_bytes())?;
    write_file(&out.join("questions.jsonl"), to_jsonl(&questions).as_bytes())?;
    write_file(&out.join("scores.jsonl"), to_jsonl(&scores).as_bytes())?;
    write_file(&out.join("report.md"), md.as_bytes())?;
    write_file(&out.join("report.csv"), report.to_csv().as_bytes())?;
    let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
    json.push(b'\n');
    write_file(&out.join("report.json"), &json)?;
    Ok(report)
}

fn rule_best_windows(records: &[UnitRecord]) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    for r in records {
        if let Some(k) = r.rule_k {
            let s = format!("{} {}: k={k}", r.model, r.strategy.modality);
            if !seen.contains(&s) {
                seen.push(s);
            }
        }
    }
    seen
}

/// Executes the whole matrix and writes the aggregated outputs.
pub async fn cmd_run(
    engine: &Engine,
    strategies: &[ContextStrategy],
    out: &Path,
    options: RunOptions,
) -> Result<(ExecStats, Report), HarnessError> {
    if strategies.is_empty() {
        return Err(HarnessError::Usage("at least one strategy is required".into()));
    }
    let stats = execute_units(engine, strategies, out, options).await?;
    let report = assemble(&engine.corpus, &engine.model_names(), strategies, out)?;
    Ok((stats, report))
}

pub fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<(), HarnessError> {
    let mut body = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    body.push(b'\n');
    write_file(&out.join(RUN_MANIFEST), &body)
}

pub fn read_manifest(out: &Path) -> Result<RunManifest, HarnessError> {
    let path = out.join(RUN_MANIFEST);
    if !path.exists() {
        return Err(HarnessError::Missing {
            what: "run manifest",
            path,
        });
    }
    serde_json::from_str(&read_file(&path)?).map_err(|e| HarnessError::Usage(format!("{}: {e}", path.display())))
}
