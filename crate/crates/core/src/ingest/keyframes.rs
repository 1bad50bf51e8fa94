//! Slide-change detection over a frame stream.
//!
//! Frames are sampled every `skip_n + 1` frames. The first sampled frame is
//! always a keyframe; afterwards a sampled frame becomes a keyframe when its
//! hash is more than `delta` away from the previously sampled frame's hash.
//! Timestamps count elapsed source frames, so skipped frames advance time.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use super::phash::{hash_distance, perceptual_hash};
use super::IngestError;
use crate::corpus::{CropRect, Keyframe, FRAMES_DIR};

pub const DEFAULT_SKIP_N: usize = 30;
pub const DEFAULT_DELTA: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyframeParams {
    pub fps: f64,
    pub skip_n: usize,
    pub delta: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<CropRect>,
}

impl KeyframeParams {
    pub fn new(fps: f64) -> Self {
        KeyframeParams {
            fps,
            skip_n: DEFAULT_SKIP_N,
            delta: DEFAULT_DELTA,
            crop: None,
        }
    }

    fn validate(&self) -> Result<(), IngestError> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(IngestError::InvalidParams(format!("fps must be positive, got {}", self.fps)));
        }
        Ok(())
    }
}

/// An ordered stream of decoded frames.
pub trait FrameSource {
    fn next_frame(&mut self) -> Result<Option<DynamicImage>, IngestError>;

    /// Skips `n` frames; `false` when the stream ended while skipping.
    fn skip(&mut self, n: usize) -> Result<bool, IngestError> {
        for _ in 0..n {
            if self.next_frame()?.is_none() {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// In-memory frames, mostly for synthetic sequences.
pub struct MemoryFrames {
    frames: std::vec::IntoIter<DynamicImage>,
}

impl MemoryFrames {
    pub fn new(frames: Vec<DynamicImage>) -> Self {
        MemoryFrames {
            frames: frames.into_iter(),
        }
    }
}

impl FrameSource for MemoryFrames {
    fn next_frame(&mut self) -> Result<Option<DynamicImage>, IngestError> {
        Ok(self.frames.next())
    }
}

/// A directory of frame images (e.g. `000001.png`, `000002.png`, ...) read
/// in lexicographic file-name order. Skipped frames are never decoded.
pub struct DirFrames {
    paths: Vec<PathBuf>,
    pos: usize,
}

impl DirFrames {
    pub fn open(dir: &Path) -> Result<Self, IngestError> {
        let read = fs::read_dir(dir).map_err(|e| IngestError::Undecodable {
            source_path: dir.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut paths: Vec<PathBuf> = read
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
            })
            .collect();
        paths.sort();
        Ok(DirFrames { paths, pos: 0 })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

impl FrameSource for DirFrames {
    fn next_frame(&mut self) -> Result<Option<DynamicImage>, IngestError> {
        let Some(path) = self.paths.get(self.pos) else {
            return Ok(None);
        };
        self.pos += 1;
        image::open(path).map(Some).map_err(|e| IngestError::Undecodable {
            source_path: path.clone(),
            message: e.to_string(),
        })
    }

    fn skip(&mut self, n: usize) -> Result<bool, IngestError> {
        let target = self.pos + n;
        self.pos = target.min(self.paths.len());
        Ok(target <= self.paths.len())
    }
}

/// Dumps a video into `frames_dir/%06d.png` with an external `ffmpeg`.
pub fn dump_video_frames(video: &Path, frames_dir: &Path) -> Result<DirFrames, IngestError> {
    fs::create_dir_all(frames_dir).map_err(|e| IngestError::io(frames_dir, e))?;
    let undecodable = |message: String| IngestError::Undecodable {
        source_path: video.to_path_buf(),
        message,
    };
    let status = Command::new("ffmpeg")
        .arg("-v")
        .arg("error")
        .arg("-i")
        .arg(video)
        .arg(frames_dir.join("%06d.png"))
        .status()
        .map_err(|e| undecodable(format!("cannot run ffmpeg: {e}")))?;
    if !status.success() {
        return Err(undecodable(format!("ffmpeg exited with {status}")));
    }
    DirFrames::open(frames_dir)
}

pub fn crop_frame(frame: &DynamicImage, crop: Option<CropRect>) -> Result<DynamicImage, IngestError> {
    let Some(r) = crop else {
        return Ok(frame.clone());
    };
    let fits = r.w > 0
        && r.h > 0
        && r.x.checked_add(r.w).is_some_and(|e| e <= frame.width())
        && r.y.checked_add(r.h).is_some_and(|e| e <= frame.height());
    if !fits {
        return Err(IngestError::CropOutOfBounds {
            crop: r,
            width: frame.width(),
            height: frame.height(),
        });
    }
    Ok(frame.crop_imm(r.x, r.y, r.w, r.h))
}

/// A keyframe found by [`detect_keyframes`], before it is written to disk.
#[derive(Debug, Clone)]
pub struct DetectedKeyframe {
    /// Index of the source frame (0-based, counting skipped frames).
    pub frame_index: u64,
    pub timestamp_s: f64,
    pub phash: Vec<u8>,
    pub image: DynamicImage,
}

pub fn detect_keyframes(
    source: &mut dyn FrameSource,
    params: &KeyframeParams,
) -> Result<Vec<DetectedKeyframe>, IngestError> {
    params.validate()?;
    let Some(mut frame) = source.next_frame()? else {
        return Err(IngestError::NoFrames);
    };
    let mut frame_index: u64 = 0;
    let mut prev_hash: Option<Vec<u8>> = None;
    let mut found = Vec::new();
    loop {
        let cropped = crop_frame(&frame, params.crop)?;
        let hash = perceptual_hash(&cropped)?;
        let changed = match &prev_hash {
            None => true,
            Some(prev) => hash_distance(&hash, prev)? > params.delta,
        };
        if found.is_empty() || changed {
            found.push(DetectedKeyframe {
                frame_index,
                timestamp_s: frame_index as f64 / params.fps,
                phash: hash.clone(),
                image: cropped,
            });
        }
        prev_hash = Some(hash);

        if !source.skip(params.skip_n)? {
            break;
        }
        match source.next_frame()? {
            Some(next) => {
                frame = next;
                frame_index += params.skip_n as u64 + 1;
            }
            None => break,
        }
    }
    Ok(found)
}

/// Runs detection and saves each keyframe as `frames/{⌊t⌋}.png` under
/// `lecture_dir`. Two keyframes inside the same second get `-1`, `-2`, ...
/// suffixes so no file is overwritten.
pub fn extract_keyframes(
    source: &mut dyn FrameSource,
    params: &KeyframeParams,
    lecture_dir: &Path,
) -> Result<Vec<Keyframe>, IngestError> {
    let detected = detect_keyframes(source, params)?;
    let frames_dir = lecture_dir.join(FRAMES_DIR);
    fs::create_dir_all(&frames_dir).map_err(|e| IngestError::io(&frames_dir, e))?;

    let mut out = Vec::with_capacity(detected.len());
    let mut last_second: Option<u64> = None;
    let mut repeat = 0;
    for (i, kf) in detected.into_iter().enumerate() {
        let second = kf.timestamp_s.floor() as u64;
        if last_second == Some(second) {
            repeat += 1;
        } else {
            repeat = 0;
        }
        last_second = Some(second);
        let name = if repeat == 0 {
            format!("{second}.png")
        } else {
            format!("{second}-{repeat}.png")
        };
        let path = frames_dir.join(&name);
        kf.image
            .save(&path)
            .map_err(|e| IngestError::io(&path, std::io::Error::other(e)))?;
        out.push(Keyframe {
            index: i + 1,
            timestamp_s: kf.timestamp_s,
            image_ref: format!("{FRAMES_DIR}/{name}"),
            phash: kf.phash,
            caption: String::new(),
            caption_error: None,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{ImageBuffer, Luma};

    fn flat(v: u8) -> DynamicImage {
        DynamicImage::ImageLuma8(ImageBuffer::from_pixel(32, 32, Luma([v])))
    }

    /// A white "slide" with a dark block in one of 16 grid cells.
    fn scene(k: u32) -> DynamicImage {
        let (cx, cy) = (k % 4, (k / 4) % 4);
        DynamicImage::ImageLuma8(ImageBuffer::from_fn(64, 48, |x, y| {
            Luma([if x / 16 == cx && y / 12 == cy { 10 } else { 240 }])
        }))
    }

    #[test]
    fn scenes_are_far_apart() {
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    let d = hash_distance(
                        &perceptual_hash(&scene(a)).unwrap(),
                        &perceptual_hash(&scene(b)).unwrap(),
                    )
                    .unwrap();
                    assert!(d > DEFAULT_DELTA, "scenes {a} and {b}: {d}");
                }
            }
        }
    }

    #[test]
    fn identical_frames_give_one_keyframe_at_zero() {
        let mut src = MemoryFrames::new(vec![flat(128); 100]);
        let params = KeyframeParams { skip_n: 0, ..KeyframeParams::new(30.0) };
        let kfs = detect_keyframes(&mut src, &params).unwrap();
        assert_eq!(kfs.len(), 1);
        assert_eq!(kfs[0].timestamp_s, 0.0);
    }

    #[test]
    fn huge_delta_suppresses_changes() {
        let mut frames = vec![scene(0); 50];
        frames.extend(vec![scene(1); 50]);
        let params = KeyframeParams { skip_n: 0, delta: 10_000, ..KeyframeParams::new(1.0) };
        let kfs = detect_keyframes(&mut MemoryFrames::new(frames), &params).unwrap();
        assert_eq!(kfs.len(), 1);
    }

    #[test]
    fn skipping_advances_elapsed_frames() {
        let mut frames = vec![scene(0); 10];
        frames.extend(vec![scene(1); 10]);
        let params = KeyframeParams { skip_n: 4, delta: 5, ..KeyframeParams::new(5.0) };
        let kfs = detect_keyframes(&mut MemoryFrames::new(frames), &params).unwrap();
        // sampled frames 0, 5, 10, 15: the change is seen at frame 10 → 2 s
        assert_eq!(kfs.len(), 2);
        assert_eq!(kfs[1].frame_index, 10);
        assert_eq!(kfs[1].timestamp_s, 2.0);
    }

    #[test]
    fn zero_frames_is_error() {
        let err = detect_keyframes(&mut MemoryFrames::new(vec![]), &KeyframeParams::new(30.0)).unwrap_err();
        assert!(matches!(err, IngestError::NoFrames));
    }

    #[test]
    fn crop_out_of_bounds_is_error() {
        let crop = CropRect { x: 20, y: 0, w: 20, h: 10 };
        assert!(matches!(crop_frame(&flat(0), Some(crop)), Err(IngestError::CropOutOfBounds { .. })));
        let ok = crop_frame(&flat(0), Some(CropRect { x: 2, y: 2, w: 10, h: 5 })).unwrap();
        assert_eq!((ok.width(), ok.height()), (10, 5));
    }

    #[test]
    fn same_second_keyframes_get_distinct_files() {
        let dir = tempfile::tempdir().unwrap();
        let frames = vec![scene(0), scene(1), scene(0)];
        let params = KeyframeParams { skip_n: 0, delta: 5, ..KeyframeParams::new(30.0) };
        let kfs = extract_keyframes(&mut MemoryFrames::new(frames), &params, dir.path()).unwrap();
        assert_eq!(kfs.len(), 3);
        let refs: Vec<_> = kfs.iter().map(|k| k.image_ref.as_str()).collect();
        assert_eq!(refs, ["frames/0.png", "frames/0-1.png", "frames/0-2.png"]);
        assert!(kfs.windows(2).all(|w| w[0].timestamp_s < w[1].timestamp_s));
        for k in &kfs {
            assert!(dir.path().join(&k.image_ref).is_file());
        }
    }

    #[test]
    fn dir_frames_skip_without_decoding() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..5 {
            scene(0).save(dir.path().join(format!("{i:06}.png"))).unwrap();
        }
        // a corrupt file that is only ever skipped
        fs::write(dir.path().join("000002.png"), b"not a png").unwrap();
        let mut src = DirFrames::open(dir.path()).unwrap();
        assert_eq!(src.len(), 5);
        let params = KeyframeParams { skip_n: 1, ..KeyframeParams::new(1.0) };
        let kfs = detect_keyframes(&mut src, &params);
        // frames 0 and 4 are decoded, 1 and 3 skipped, but 2 is decoded and corrupt
        assert!(matches!(kfs, Err(IngestError::Undecodable { .. })));
        let mut src = DirFrames::open(dir.path()).unwrap();
        let params = KeyframeParams { skip_n: 2, ..KeyframeParams::new(1.0) };
        assert_eq!(detect_keyframes(&mut src, &params).unwrap().len(), 1);
    }
}
