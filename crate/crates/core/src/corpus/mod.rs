//! Lectures, quiz items and their on-disk layout.
//!
//! A corpus directory holds a `manifest.json` naming the course and its
//! lectures. Each lecture lives in its own directory:
//!
//! ```text
//! <root>/manifest.json
//! <root>/<lecture>/transcript.jsonl   one TranscriptSegment per line
//! <root>/<lecture>/keyframes.jsonl    one Keyframe per line
//! <root>/<lecture>/quiz.jsonl         one quiz record per line
//! <root>/<lecture>/alignment.json     optional, recomputed when absent
//! <root>/<lecture>/frames/            keyframe images
//! ```
//!
//! Everything is validated on load and immutable afterwards.

mod stats;

pub use stats::{corpus_stats, CorpusStats, Summary};

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::align_keyframes;
use crate::util::write_atomic;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const KEYFRAMES_FILE: &str = "keyframes.jsonl";
pub const QUIZ_FILE: &str = "quiz.jsonl";
pub const ALIGNMENT_FILE: &str = "alignment.json";
pub const FRAMES_DIR: &str = "frames";

/// Answers annotators were told to avoid; matched against the whole answer.
pub const BANNED_ANSWERS: [&str; 3] = ["yes", "no", "none of the above"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("lecture {lecture}: {field}: {message}")]
    Schema {
        lecture: String,
        field: String,
        message: String,
    },
    #[error("lecture {lecture}: {field}: timestamp {timestamp_s}s is outside the lecture duration [0, {duration_s}]")]
    TimestampOutOfRange {
        lecture: String,
        field: String,
        timestamp_s: f64,
        duration_s: f64,
    },
    #[error("lecture {lecture}: {field}: answer {answer:?} violates the banned-answer rule (yes / no / none of the above)")]
    BannedAnswer {
        lecture: String,
        field: String,
        answer: String,
    },
    #[error("corpus is empty")]
    Empty,
}

impl CorpusError {
    fn schema(lecture: &str, field: impl Into<String>, message: impl Into<String>) -> Self {
        CorpusError::Schema {
            lecture: lecture.to_string(),
            field: field.into(),
            message: message.into(),
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSegment {
    /// 1-based ordinal, shown as the segment ID in prompts.
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub index: usize,
    pub timestamp_s: f64,
    /// Path relative to the lecture directory.
    pub image_ref: String,
    pub phash: Vec<u8>,
    #[serde(default)]
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_error: Option<String>,
}

/// Pixel rectangle used to crop frames down to the shared screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lecture {
    pub id: String,
    pub course: String,
    pub duration_s: f64,
    pub segments: Vec<TranscriptSegment>,
    pub keyframes: Vec<Keyframe>,
    /// Keyframe index to the segment indices it covers.
    pub alignment: BTreeMap<usize, Vec<usize>>,
    #[serde(skip)]
    pub dir: PathBuf,
}

impl Lecture {
    /// Resolves a timestamp to a 1-based segment index.
    ///
    /// The earliest segment whose `[start_s, end_s]` contains `t` wins, so a
    /// boundary shared by two segments belongs to the earlier one. Timestamps
    /// in a silence gap resolve to the segment that just ended, and anything
    /// before the first segment resolves to segment 1.
    pub fn resolve_timestamp(&self, t: f64) -> Option<usize> {
        let first = self.segments.first()?;
        if t < first.start_s {
            return Some(first.index);
        }
        let mut last_started = first.index;
        for seg in &self.segments {
            if seg.start_s <= t && t <= seg.end_s {
                return Some(seg.index);
            }
            if seg.start_s <= t {
                last_started = seg.index;
            } else {
                break;
            }
        }
        Some(last_started)
    }

    pub fn segment(&self, index: usize) -> Option<&TranscriptSegment> {
        index.checked_sub(1).and_then(|i| self.segments.get(i))
    }

    pub fn keyframe(&self, index: usize) -> Option<&Keyframe> {
        index.checked_sub(1).and_then(|i| self.keyframes.get(i))
    }

    /// The keyframe whose alignment interval owns the given segment.
    pub fn keyframe_for_segment(&self, segment_index: usize) -> Option<usize> {
        self.alignment
            .iter()
            .find(|(_, segs)| segs.contains(&segment_index))
            .map(|(k, _)| *k)
    }

    /// Full transcript text, segments joined by single spaces.
    pub fn transcript_text(&self) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&seg.text);
        }
        out
    }

    pub fn image_path(&self, keyframe: &Keyframe) -> PathBuf {
        self.dir.join(&keyframe.image_ref)
    }

    /// Checks every structural invariant of a lecture.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let id = self.id.as_str();
        let mut prev_end = f64::NEG_INFINITY;
        for (pos, seg) in self.segments.iter().enumerate() {
            let field = |f: &str| format!("{TRANSCRIPT_FILE}:{}.{f}", pos + 1);
            if seg.index != pos + 1 {
                return Err(CorpusError::schema(
                    id,
                    field("index"),
                    format!("expected {}, found {}", pos + 1, seg.index),
                ));
            }
            if !(seg.start_s.is_finite() && seg.end_s.is_finite()) || seg.start_s < 0.0 {
                return Err(CorpusError::schema(id, field("start_s"), "invalid time"));
            }
            if seg.start_s > seg.end_s {
                return Err(CorpusError::schema(
                    id,
                    field("end_s"),
                    format!("end {} precedes start {}", seg.end_s, seg.start_s),
                ));
            }
            if seg.start_s < prev_end {
                return Err(CorpusError::schema(
                    id,
                    field("start_s"),
                    "segment overlaps its predecessor",
                ));
            }
            if seg.text.trim().is_empty() {
                return Err(CorpusError::schema(id, field("text"), "empty segment text"));
            }
            prev_end = seg.end_s;
        }
        if let Some(last) = self.segments.last() {
            if self.duration_s < last.end_s {
                return Err(CorpusError::schema(
                    id,
                    "manifest.duration_s",
                    format!(
                        "duration {} is shorter than the last segment end {}",
                        self.duration_s, last.end_s
                    ),
                ));
            }
        }

        let hash_len = self.keyframes.first().map(|k| k.phash.len());
        let mut prev_ts = f64::NEG_INFINITY;
        for (pos, kf) in self.keyframes.iter().enumerate() {
            let field = |f: &str| format!("{KEYFRAMES_FILE}:{}.{f}", pos + 1);
            if kf.index != pos + 1 {
                return Err(CorpusError::schema(
                    id,
                    field("index"),
                    format!("expected {}, found {}", pos + 1, kf.index),
                ));
            }
            if kf.timestamp_s <= prev_ts {
                return Err(CorpusError::schema(
                    id,
                    field("timestamp_s"),
                    "keyframe timestamps must be strictly increasing",
                ));
            }
            if Some(kf.phash.len()) != hash_len {
                return Err(CorpusError::schema(
                    id,
                    field("phash"),
                    "hash length differs from the first keyframe",
                ));
            }
            if !self.dir.as_os_str().is_empty() && !self.image_path(kf).is_file() {
                return Err(CorpusError::schema(
                    id,
                    field("image_ref"),
                    format!("{} does not exist", self.image_path(kf).display()),
                ));
            }
            prev_ts = kf.timestamp_s;
        }

        let mut owner = vec![0usize; self.segments.len()];
        for (kf, segs) in &self.alignment {
            if self.keyframe(*kf).is_none() {
                return Err(CorpusError::schema(
                    id,
                    format!("{ALIGNMENT_FILE}.{kf}"),
                    "unknown keyframe index",
                ));
            }
            for s in segs {
                match s.checked_sub(1).and_then(|i| owner.get_mut(i)) {
                    Some(slot) if *slot == 0 => *slot = *kf,
                    Some(_) => {
                        return Err(CorpusError::schema(
                            id,
                            format!("{ALIGNMENT_FILE}.{kf}"),
                            format!("segment {s} is assigned to more than one keyframe"),
                        ))
                    }
                    None => {
                        return Err(CorpusError::schema(
                            id,
                            format!("{ALIGNMENT_FILE}.{kf}"),
                            format!("unknown segment index {s}"),
                        ))
                    }
                }
            }
        }
        Ok(())
    }
}

/// Where a quiz item was anchored in its source file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampAnchor {
    Seconds,
    SegmentId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizItem {
    pub id: String,
    pub lecture_id: String,
    pub timestamp_s: f64,
    /// Resolved 1-based segment index for `timestamp_s`.
    pub segment_index: usize,
    pub answer: String,
    pub reference_question: String,
    pub distractors: Vec<String>,
    pub choice_count: usize,
    pub anchor: TimestampAnchor,
}

/// Line format of `quiz.jsonl`. Either `timestamp_s` or `segment_id` anchors
/// the item; segment IDs are passed through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lecture_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_id: Option<usize>,
    pub answer: String,
    pub reference_question: String,
    #[serde(default)]
    pub distractors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice_count: Option<usize>,
}

impl From<&QuizItem> for QuizRecord {
    fn from(item: &QuizItem) -> Self {
        let (timestamp_s, segment_id) = match item.anchor {
            TimestampAnchor::Seconds => (Some(item.timestamp_s), None),
            TimestampAnchor::SegmentId => (None, Some(item.segment_index)),
        };
        QuizRecord {
            id: item.id.clone(),
            lecture_id: Some(item.lecture_id.clone()),
            timestamp_s,
            segment_id,
            answer: item.answer.clone(),
            reference_question: item.reference_question.clone(),
            distractors: item.distractors.clone(),
            choice_count: Some(item.choice_count),
        }
    }
}

/// Returns the offending banned answer, if any. Exact, case-insensitive,
/// whole-answer match: "not a yes" is fine, "YES" is not.
pub fn banned_answer(answer: &str) -> Option<&'static str> {
    let norm = crate::text::collapse_whitespace(answer).to_lowercase();
    BANNED_ANSWERS.iter().copied().find(|b| *b == norm)
}

impl QuizRecord {
    /// Validates the record against its lecture and resolves the segment.
    pub fn resolve(&self, lecture: &Lecture, line: usize) -> Result<QuizItem, CorpusError> {
        let lid = lecture.id.as_str();
        let field = |f: &str| format!("{QUIZ_FILE}:{line}.{f}");
        if self.answer.trim().is_empty() {
            return Err(CorpusError::schema(lid, field("answer"), "empty answer"));
        }
        if banned_answer(&self.answer).is_some() {
            return Err(CorpusError::BannedAnswer {
                lecture: lid.to_string(),
                field: field("answer"),
                answer: self.answer.clone(),
            });
        }
        if let Some(other) = &self.lecture_id {
            if other != &lecture.id {
                return Err(CorpusError::schema(
                    lid,
                    field("lecture_id"),
                    format!("item belongs to lecture {other}"),
                ));
            }
        }
        let (timestamp_s, segment_index, anchor) = match (self.timestamp_s, self.segment_id) {
            (Some(t), _) => {
                if !(t.is_finite() && (0.0..=lecture.duration_s).contains(&t)) {
                    return Err(CorpusError::TimestampOutOfRange {
                        lecture: lid.to_string(),
                        field: field("timestamp_s"),
                        timestamp_s: t,
                        duration_s: lecture.duration_s,
                    });
                }
                let idx = lecture.resolve_timestamp(t).ok_or_else(|| {
                    CorpusError::schema(lid, field("timestamp_s"), "lecture has no segments")
                })?;
                (t, idx, TimestampAnchor::Seconds)
            }
            (None, Some(id)) => {
                let seg = lecture.segment(id).ok_or_else(|| {
                    CorpusError::schema(lid, field("segment_id"), format!("no segment {id}"))
                })?;
                (seg.start_s, id, TimestampAnchor::SegmentId)
            }
            (None, None) => {
                return Err(CorpusError::schema(
                    lid,
                    field("timestamp_s"),
                    "either timestamp_s or segment_id is required",
                ))
            }
        };
        Ok(QuizItem {
            id: self.id.clone(),
            lecture_id: lecture.id.clone(),
            timestamp_s,
            segment_index,
            answer: self.answer.clone(),
            reference_question: self.reference_question.clone(),
            distractors: self.distractors.clone(),
            choice_count: self.choice_count.unwrap_or(self.distractors.len() + 1),
            anchor,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Lecture directory relative to the corpus root; defaults to the id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<CropRect>,
}

impl ManifestEntry {
    pub fn dir_name(&self) -> &str {
        self.dir.as_deref().unwrap_or(&self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub course: String,
    pub lectures: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(root: &Path) -> Result<Manifest, CorpusError> {
        let path = root.join(MANIFEST_FILE);
        let raw = fs::read_to_string(&path).map_err(|e| CorpusError::io(&path, e))?;
        serde_json::from_str(&raw).map_err(|e| CorpusError::schema("-", MANIFEST_FILE, e.to_string()))
    }

    pub fn write(&self, root: &Path) -> Result<(), CorpusError> {
        let path = root.join(MANIFEST_FILE);
        let mut body = serde_json::to_string_pretty(self).expect("manifest serializes");
        body.push('\n');
        write_atomic(&path, body.as_bytes()).map_err(|e| CorpusError::io(&path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub lecture: Lecture,
    pub items: Vec<QuizItem>,
    pub crop: Option<CropRect>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub course: String,
    pub entries: Vec<CorpusEntry>,
}

impl Corpus {
    pub fn lecture(&self, id: &str) -> Option<&CorpusEntry> {
        self.entries.iter().find(|e| e.lecture.id == id)
    }

    pub fn items(&self) -> impl Iterator<Item = (&Lecture, &QuizItem)> {
        self.entries
            .iter()
            .flat_map(|e| e.items.iter().map(move |i| (&e.lecture, i)))
    }
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(
    path: &Path,
    lecture: &str,
    file: &str,
) -> Result<Vec<T>, CorpusError> {
    let raw = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| CorpusError::schema(lecture, format!("{file}:{}", n + 1), e.to_string()))
        })
        .collect()
}

pub fn to_jsonl<T: Serialize>(rows: &[T]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("row serializes"));
        out.push('\n');
    }
    out
}

/// Loads one lecture directory. A missing `keyframes.jsonl` or `quiz.jsonl`
/// means none; a missing transcript is an error.
pub fn load_lecture(
    root: &Path,
    course: &str,
    entry: &ManifestEntry,
) -> Result<(Lecture, Vec<QuizItem>), CorpusError> {
    let dir = root.join(entry.dir_name());
    let id = entry.id.as_str();
    let segments: Vec<TranscriptSegment> =
        read_jsonl(&dir.join(TRANSCRIPT_FILE), id, TRANSCRIPT_FILE)?;
    if segments.is_empty() {
        return Err(CorpusError::schema(id, TRANSCRIPT_FILE, "transcript has no segments"));
    }
    let kf_path = dir.join(KEYFRAMES_FILE);
    let keyframes: Vec<Keyframe> = if kf_path.exists() {
        read_jsonl(&kf_path, id, KEYFRAMES_FILE)?
    } else {
        Vec::new()
    };
    let duration_s = entry
        .duration_s
        .unwrap_or_else(|| segments.last().map_or(0.0, |s| s.end_s));

    let mut lecture = Lecture {
        id: entry.id.clone(),
        course: course.to_string(),
        duration_s,
        segments,
        keyframes,
        alignment: BTreeMap::new(),
        dir: dir.clone(),
    };
    let align_path = dir.join(ALIGNMENT_FILE);
    lecture.alignment = if align_path.exists() {
        let raw = fs::read_to_string(&align_path).map_err(|e| CorpusError::io(&align_path, e))?;
        serde_json::from_str(&raw).map_err(|e| CorpusError::schema(id, ALIGNMENT_FILE, e.to_string()))?
    } else {
        align_keyframes(&lecture)
    };
    lecture.validate()?;

    let quiz_path = dir.join(QUIZ_FILE);
    let records: Vec<QuizRecord> = if quiz_path.exists() {
        read_jsonl(&quiz_path, id, QUIZ_FILE)?
    } else {
        Vec::new()
    };
    let items = records
        .iter()
        .enumerate()
        .map(|(n, r)| r.resolve(&lecture, n + 1))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((lecture, items))
}

pub fn load_corpus(root: &Path) -> Result<Corpus, CorpusError> {
    let manifest = Manifest::read(root)?;
    let mut entries = Vec::with_capacity(manifest.lectures.len());
    for entry in &manifest.lectures {
        let (lecture, items) = load_lecture(root, &manifest.course, entry)?;
        entries.push(CorpusEntry {
            lecture,
            items,
            crop: entry.crop,
        });
    }
    Ok(Corpus {
        course: manifest.course,
        entries,
    })
}

/// Writes the lecture metadata files into `dir`.
pub fn save_lecture(lecture: &Lecture, items: &[QuizItem], dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes()).map_err(|e| CorpusError::io(&path, e))
    };
    write(TRANSCRIPT_FILE, to_jsonl(&lecture.segments))?;
    write(KEYFRAMES_FILE, to_jsonl(&lecture.keyframes))?;
    let records: Vec<QuizRecord> = items.iter().map(QuizRecord::from).collect();
    write(QUIZ_FILE, to_jsonl(&records))?;
    let mut alignment = serde_json::to_string(&lecture.alignment).expect("alignment serializes");
    alignment.push('\n');
    write(ALIGNMENT_FILE, alignment)?;

    if !lecture.dir.as_os_str().is_empty() && lecture.dir != dir {
        for kf in &lecture.keyframes {
            let src = lecture.image_path(kf);
            let dst = dir.join(&kf.image_ref);
            if let Some(parent) = dst.parent() {
                fs::create_dir_all(parent).map_err(|e| CorpusError::io(parent, e))?;
            }
            fs::copy(&src, &dst).map_err(|e| CorpusError::io(&src, e))?;
        }
    }
    Ok(())
}

/// Writes a whole corpus (manifest + lecture directories) under `root`.
/// Frame images are copied when the target differs from the source.
pub fn save_corpus(corpus: &Corpus, root: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(root).map_err(|e| CorpusError::io(root, e))?;
    let manifest = Manifest {
        course: corpus.course.clone(),
        lectures: corpus
            .entries
            .iter()
            .map(|e| ManifestEntry {
                id: e.lecture.id.clone(),
                dir: None,
                duration_s: Some(e.lecture.duration_s),
                crop: e.crop,
            })
            .collect(),
    };
    manifest.write(root)?;
    for entry in &corpus.entries {
        save_lecture(&entry.lecture, &entry.items, &root.join(&entry.lecture.id))?;
    }
    Ok(())
}
