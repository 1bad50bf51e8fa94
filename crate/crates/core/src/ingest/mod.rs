//! From raw recordings to [`Lecture`](crate::corpus::Lecture) files.

mod align;
mod caption;
mod keyframes;
pub mod phash;
mod punctuation;

pub use align::align_keyframes;
pub use caption::{caption_keyframes, CaptionOptions, CAPTION_PROMPT};
pub use keyframes::{
    crop_frame, detect_keyframes, dump_video_frames, extract_keyframes, DetectedKeyframe, DirFrames, FrameSource,
    KeyframeParams, MemoryFrames, DEFAULT_DELTA, DEFAULT_SKIP_N,
};
pub use phash::{hash_distance, perceptual_hash};
pub use punctuation::{restore_punctuation, HttpPunctuation, PunctuationRestorer};

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::CropRect;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("hash length mismatch: {left} vs {right}")]
    HashLengthMismatch { left: usize, right: usize },
    #[error("cannot hash an empty image")]
    EmptyImage,
    #[error("cannot decode {}: {message}", source_path.display())]
    Undecodable { source_path: PathBuf, message: String },
    #[error("video has no frames")]
    NoFrames,
    #[error("crop {crop:?} does not fit a {width}x{height} frame")]
    CropOutOfBounds { crop: CropRect, width: u32, height: u32 },
    #[error("invalid keyframe parameters: {0}")]
    InvalidParams(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
