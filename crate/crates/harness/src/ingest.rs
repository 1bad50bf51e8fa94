//! `ingest` and `caption` commands.
//!
//! Ingestion runs in stages (transcript, keyframes, alignment, quiz,
//! manifest). A stage whose output already exists is skipped unless
//! `force` is set, so re-running an ingest is a no-op.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use lectureqg_core::corpus::{
    load_lecture, read_jsonl, to_jsonl, CropRect, Keyframe, Lecture, Manifest, ManifestEntry, TranscriptSegment,
    ALIGNMENT_FILE, KEYFRAMES_FILE, QUIZ_FILE, TRANSCRIPT_FILE,
};
use lectureqg_core::ingest::{
    align_keyframes, caption_keyframes, dump_video_frames, extract_keyframes, restore_punctuation, CaptionOptions,
    DirFrames, KeyframeParams, PunctuationRestorer,
};
use lectureqg_core::llm::LlmClient;
use serde::{Deserialize, Serialize};

use crate::{read_file, write_file, HarnessError};

#[derive(Debug, Clone, PartialEq)]
pub enum FrameInput {
    /// Decoded with an external frame-dump tool.
    Video(PathBuf),
    /// Ordered frame images.
    Frames(PathBuf),
}

pub struct IngestRequest {
    pub corpus: PathBuf,
    pub lecture_id: String,
    /// Course name for a new manifest.
    pub course: Option<String>,
    pub transcript: PathBuf,
    pub frames: Option<FrameInput>,
    pub quiz: Option<PathBuf>,
    pub params: KeyframeParams,
    pub duration_s: Option<f64>,
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Done,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestOutcome {
    pub lecture_dir: PathBuf,
    pub stages: Vec<(&'static str, StageStatus)>,
    pub segments: usize,
    pub keyframes: usize,
    pub items: usize,
}

impl IngestOutcome {
    pub fn all_skipped(&self) -> bool {
        self.stages.iter().all(|(_, s)| *s == StageStatus::Skipped)
    }
}

impl fmt::Display for IngestOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (stage, status) in &self.stages {
            writeln!(f, "{stage}: {}", if *status == StageStatus::Done { "done" } else { "skipped" })?;
        }
        write!(
            f,
            "{}: {} segment(s), {} keyframe(s), {} quiz item(s)",
            self.lecture_dir.display(),
            self.segments,
            self.keyframes,
            self.items
        )
    }
}

/// Transcript input: segments with optional ordinals.
#[derive(Debug, Deserialize)]
struct RawSegment {
    #[serde(default)]
    index: Option<usize>,
    start_s: f64,
    end_s: f64,
    text: String,
}

fn read_transcript(path: &Path) -> Result<Vec<TranscriptSegment>, HarnessError> {
    let raw: Vec<RawSegment> = read_jsonl(path, "-", &path.display().to_string())?;
    if raw.is_empty() {
        return Err(HarnessError::Usage(format!("{}: transcript has no segments", path.display())));
    }
    raw.into_iter()
        .enumerate()
        .map(|(i, s)| {
            if s.index.is_some_and(|idx| idx != i + 1) {
                return Err(HarnessError::Usage(format!(
                    "{}:{}: segment index {} out of sequence",
                    path.display(),
                    i + 1,
                    s.index.unwrap_or_default()
                )));
            }
            Ok(TranscriptSegment {
                index: i + 1,
                start_s: s.start_s,
                end_s: s.end_s,
                text: s.text,
            })
        })
        .collect()
}

fn stage(done: bool) -> StageStatus {
    if done {
        StageStatus::Done
    } else {
        StageStatus::Skipped
    }
}

pub async fn cmd_ingest(
    req: &IngestRequest,
    punctuation: Option<&dyn PunctuationRestorer>,
) -> Result<IngestOutcome, HarnessError> {
    if !req.transcript.is_file() {
        return Err(HarnessError::Missing {
            what: "transcript",
            path: req.transcript.clone(),
        });
    }
    match &req.frames {
        Some(FrameInput::Video(p)) | Some(FrameInput::Frames(p)) if !p.exists() => {
            return Err(HarnessError::Missing {
                what: "frame source",
                path: p.clone(),
            })
        }
        _ => {}
    }
    if let Some(q) = req.quiz.as_ref().filter(|q| !q.is_file()) {
        return Err(HarnessError::Missing {
            what: "quiz file",
            path: q.clone(),
        });
    }
    let mut params = req.params;
    let manifest_path = req.corpus.join(lectureqg_core::corpus::MANIFEST_FILE);
    let mut manifest = if manifest_path.exists() {
        Manifest::read(&req.corpus)?
    } else {
        Manifest {
            course: req.course.clone().unwrap_or_else(|| "course".into()),
            lectures: Vec::new(),
        }
    };
    let existing = manifest.lectures.iter().find(|e| e.id == req.lecture_id).cloned();
    let dir_name = existing.as_ref().map_or(req.lecture_id.clone(), |e| e.dir_name().to_string());
    let dir = req.corpus.join(&dir_name);
    if params.crop.is_none() {
        params.crop = existing.as_ref().and_then(|e| e.crop);
    }
    let mut stages = Vec::new();

    let transcript_path = dir.join(TRANSCRIPT_FILE);
    let redo = req.force || !transcript_path.exists();
    if redo {
        let mut segments = read_transcript(&req.transcript)?;
        if let Some(p) = punctuation {
            segments = restore_punctuation(segments, p, false).await;
        }
        write_file(&transcript_path, to_jsonl(&segments).as_bytes())?;
    }
    stages.push(("transcript", stage(redo)));
    let segments: Vec<TranscriptSegment> = read_jsonl(&transcript_path, &req.lecture_id, TRANSCRIPT_FILE)?;

    let keyframes_path = dir.join(KEYFRAMES_FILE);
    let redo_frames = req.frames.is_some() && (req.force || !keyframes_path.exists());
    if redo_frames {
        let keyframes = match req.frames.as_ref().expect("checked") {
            FrameInput::Frames(d) => extract_keyframes(&mut DirFrames::open(d)?, &params, &dir)?,
            FrameInput::Video(v) => {
                let scratch = dir.join(".video-frames");
                let mut frames = dump_video_frames(v, &scratch)?;
                let kfs = extract_keyframes(&mut frames, &params, &dir);
                let _ = std::fs::remove_dir_all(&scratch);
                kfs?
            }
        };
        write_file(&keyframes_path, to_jsonl(&keyframes).as_bytes())?;
    }
    stages.push(("keyframes", stage(redo_frames)));
    let keyframes: Vec<Keyframe> = if keyframes_path.exists() {
        read_jsonl(&keyframes_path, &req.lecture_id, KEYFRAMES_FILE)?
    } else {
        Vec::new()
    };

    let duration_s = req
        .duration_s
        .or(existing.as_ref().and_then(|e| e.duration_s))
        .unwrap_or_else(|| segments.last().map_or(0.0, |s| s.end_s));
    let alignment_path = dir.join(ALIGNMENT_FILE);
    let redo_align = redo || redo_frames || !alignment_path.exists();
    if redo_align {
        let lecture = Lecture {
            id: req.lecture_id.clone(),
            course: manifest.course.clone(),
            duration_s,
            segments: segments.clone(),
            keyframes: keyframes.clone(),
            alignment: BTreeMap::new(),
            dir: dir.clone(),
        };
        let mut body = serde_json::to_string(&align_keyframes(&lecture)).expect("alignment serializes");
        body.push('\n');
        write_file(&alignment_path, body.as_bytes())?;
    }
    stages.push(("alignment", stage(redo_align)));

    let quiz_path = dir.join(QUIZ_FILE);
    let redo_quiz = req.quiz.is_some() && (req.force || !quiz_path.exists());
    if redo_quiz {
        let body = read_file(req.quiz.as_ref().expect("checked"))?;
        write_file(&quiz_path, body.as_bytes())?;
    }
    stages.push(("quiz", stage(redo_quiz)));

    let entry = ManifestEntry {
        id: req.lecture_id.clone(),
        dir: (dir_name != req.lecture_id).then_some(dir_name),
        duration_s: Some(duration_s),
        crop: params.crop,
    };
    let manifest_changed = existing.as_ref() != Some(&entry);
    if manifest_changed {
        match manifest.lectures.iter_mut().find(|e| e.id == entry.id) {
            Some(e) => *e = entry.clone(),
            None => manifest.lectures.push(entry.clone()),
        }
        manifest.write(&req.corpus)?;
    }
    stages.push(("manifest", stage(manifest_changed)));

    let (lecture, items) = load_lecture(&req.corpus, &manifest.course, &entry)?;
    Ok(IngestOutcome {
        lecture_dir: dir,
        stages,
        segments: lecture.segments.len(),
        keyframes: lecture.keyframes.len(),
        items: items.len(),
    })
}

pub fn parse_crop(text: &str) -> Result<CropRect, HarnessError> {
    let parts: Vec<u32> = text
        .split(',')
        .map(|p| p.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|_| HarnessError::Usage(format!("crop must be x,y,w,h in pixels, got {text:?}")))?;
    match parts[..] {
        [x, y, w, h] if w > 0 && h > 0 => Ok(CropRect { x, y, w, h }),
        _ => Err(HarnessError::Usage(format!("crop must be x,y,w,h with w,h > 0, got {text:?}"))),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CaptionSummary {
    pub lectures: usize,
    pub keyframes: usize,
    pub captioned: usize,
    pub failed: usize,
}

/// Captions the keyframes of every lecture (or only `only`) and rewrites
/// their `keyframes.jsonl`. Nothing else in the corpus is touched.
pub async fn cmd_caption(
    corpus_root: &Path,
    only: Option<&str>,
    client: &LlmClient,
    options: CaptionOptions,
) -> Result<CaptionSummary, HarnessError> {
    let corpus = lectureqg_core::corpus::load_corpus(corpus_root)?;
    if let Some(id) = only {
        if corpus.lecture(id).is_none() {
            return Err(HarnessError::Usage(format!("no lecture {id:?} in {}", corpus_root.display())));
        }
    }
    let mut summary = CaptionSummary::default();
    for entry in corpus.entries.into_iter().filter(|e| only.is_none_or(|id| e.lecture.id == id)) {
        let before: Vec<bool> = entry.lecture.keyframes.iter().map(|k| k.caption.trim().is_empty()).collect();
        let dir = entry.lecture.dir.clone();
        let lecture = caption_keyframes(entry.lecture, client, options).await;
        summary.lectures += 1;
        summary.keyframes += lecture.keyframes.len();
        for (k, was_empty) in lecture.keyframes.iter().zip(before) {
            if k.caption_error.is_some() {
                summary.failed += 1;
            } else if was_empty || options.force {
                summary.captioned += 1;
            }
        }
        write_file(&dir.join(KEYFRAMES_FILE), to_jsonl(&lecture.keyframes).as_bytes())?;
    }
    Ok(summary)
}
