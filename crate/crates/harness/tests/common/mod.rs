//! Synthetic lectures shared by the integration tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, Luma};
use lectureqg_core::ingest::KeyframeParams;
use lectureqg_harness::config::GeneratorConfig;
use lectureqg_harness::ingest::{cmd_ingest, FrameInput, IngestRequest};
use lectureqg_harness::RunConfig;

pub const TERMS: [&str; 32] = [
    "eigenvalue", "gradient", "softmax", "dropout", "backpropagation", "convolution", "tokenizer", "attention",
    "embedding", "regularization", "momentum", "perplexity", "normalization", "residual", "kernel", "entropy",
    "optimizer", "activation", "pooling", "recurrence", "transformer", "decoder", "encoder", "sampling",
    "likelihood", "posterior", "prior", "margin", "hinge", "sigmoid", "bias", "variance",
];

pub const SEGMENT_S: f64 = 10.0;

/// Segment `i` (1-based) of a fixture lecture.
pub fn segment_text(lecture: usize, i: usize) -> String {
    let term = TERMS[(i - 1 + lecture * 3) % TERMS.len()];
    format!("Part {i} of lecture {lecture} introduces the {term} and shows how it is used in practice.")
}

pub fn term(lecture: usize, i: usize) -> &'static str {
    TERMS[(i - 1 + lecture * 3) % TERMS.len()]
}

/// A slide: an 8x8 grid of black and white cells drawn from a fixed
/// pseudo-random sequence seeded by `scene`.
pub fn slide(scene: u64, size: u32) -> DynamicImage {
    let mut state = scene.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03;
    let mut cells = [[false; 8]; 8];
    for row in &mut cells {
        for c in row.iter_mut() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            *c = state & 1 == 1;
        }
    }
    let cell = size / 8;
    let img = GrayImage::from_fn(size, size, |x, y| {
        let on = cells[((y / cell).min(7)) as usize][((x / cell).min(7)) as usize];
        Luma([if on { 0 } else { 255 }])
    });
    DynamicImage::ImageLuma8(img)
}

/// `scenes` consecutive runs of `per_scene` identical frames.
pub fn scene_frames(scenes: usize, per_scene: usize) -> Vec<DynamicImage> {
    (0..scenes).flat_map(|s| std::iter::repeat_n(slide(s as u64 + 1, 64), per_scene)).collect()
}

pub fn write_frames(dir: &Path, frames: &[DynamicImage]) {
    std::fs::create_dir_all(dir).unwrap();
    for (i, f) in frames.iter().enumerate() {
        f.save(dir.join(format!("frame{i:05}.png"))).unwrap();
    }
}

pub struct FixtureSpec {
    pub lectures: usize,
    pub segments: usize,
    pub items_per_lecture: usize,
    pub scenes: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            lectures: 1,
            segments: 12,
            items_per_lecture: 5,
            scenes: 3,
        }
    }
}

/// Item `j` of a lecture sits in the middle of an evenly spaced segment.
pub fn item_segment(spec: &FixtureSpec, j: usize) -> usize {
    let step = spec.segments / (spec.items_per_lecture + 1);
    (step * (j + 1)).max(1)
}

/// Ingests `spec.lectures` synthetic lectures into `root`.
pub async fn write_fixture(root: &Path, spec: &FixtureSpec) {
    let work = root.with_extension("src");
    std::fs::create_dir_all(&work).unwrap();
    for l in 0..spec.lectures {
        let id = format!("lec{}", l + 1);
        let transcript = work.join(format!("{id}.transcript.jsonl"));
        let mut body = String::new();
        for i in 1..=spec.segments {
            let row = serde_json::json!({
                "start_s": (i - 1) as f64 * SEGMENT_S,
                "end_s": i as f64 * SEGMENT_S,
                "text": segment_text(l, i),
            });
            body.push_str(&row.to_string());
            body.push('\n');
        }
        std::fs::write(&transcript, body).unwrap();

        let quiz = work.join(format!("{id}.quiz.jsonl"));
        let mut body = String::new();
        for j in 0..spec.items_per_lecture {
            let seg = item_segment(spec, j);
            let answer = term(l, seg);
            let row = serde_json::json!({
                "id": format!("{id}-q{}", j + 1),
                "timestamp_s": (seg as f64 - 0.5) * SEGMENT_S,
                "answer": answer,
                "reference_question": format!("Which idea does part {seg} of lecture {l} introduce?"),
                "distractors": ["placeholder one", "placeholder two", "placeholder three"],
            });
            body.push_str(&row.to_string());
            body.push('\n');
        }
        std::fs::write(&quiz, body).unwrap();

        let frames_dir = work.join(format!("{id}.frames"));
        let per_scene = (spec.segments * SEGMENT_S as usize) / spec.scenes.max(1);
        write_frames(&frames_dir, &scene_frames(spec.scenes, per_scene));
        let mut params = KeyframeParams::new(1.0);
        params.skip_n = 4;
        let req = IngestRequest {
            corpus: root.to_path_buf(),
            lecture_id: id,
            course: Some("Synthetic ML".into()),
            transcript,
            frames: Some(FrameInput::Frames(frames_dir)),
            quiz: Some(quiz),
            params,
            duration_s: None,
            force: false,
        };
        cmd_ingest(&req, None).await.unwrap();
    }
}

/// A run config over `corpus` with one simulated generator.
pub fn sim_config(corpus: &Path, out: &Path, strategies: &[&str]) -> RunConfig {
    let mut c = RunConfig::new(corpus, out, vec![GeneratorConfig::simulated("sim")]);
    c.strategies = strategies.iter().map(|s| s.to_string()).collect();
    c
}

pub fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_lectureqg"))
}
