use std::collections::BTreeMap;

use crate::corpus::Lecture;

/// Assigns every segment to exactly one keyframe.
///
/// Keyframe `j` owns the segments whose start falls in
/// `[t_j, t_{j+1})`; the last keyframe owns the tail. Segments starting before
/// the first keyframe belong to the first keyframe. Keyframes whose interval
/// holds no segment map to an empty list.
pub fn align_keyframes(lecture: &Lecture) -> BTreeMap<usize, Vec<usize>> {
    let mut map: BTreeMap<usize, Vec<usize>> =
        lecture.keyframes.iter().map(|k| (k.index, Vec::new())).collect();
    if lecture.keyframes.is_empty() {
        return map;
    }
    for seg in &lecture.segments {
        // last keyframe with timestamp <= start, or the first one
        let pos = lecture
            .keyframes
            .partition_point(|k| k.timestamp_s <= seg.start_s)
            .saturating_sub(1);
        map.entry(lecture.keyframes[pos].index).or_default().push(seg.index);
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Keyframe, TranscriptSegment};
    use std::path::PathBuf;

    fn lecture(kf_times: &[f64], seg_starts: &[f64]) -> Lecture {
        Lecture {
            id: "l".into(),
            course: "c".into(),
            duration_s: 1000.0,
            segments: seg_starts
                .iter()
                .enumerate()
                .map(|(i, &s)| TranscriptSegment {
                    index: i + 1,
                    start_s: s,
                    end_s: s + 0.5,
                    text: format!("seg {}", i + 1),
                })
                .collect(),
            keyframes: kf_times
                .iter()
                .enumerate()
                .map(|(i, &t)| Keyframe {
                    index: i + 1,
                    timestamp_s: t,
                    image_ref: format!("frames/{t}.png"),
                    phash: vec![0; 64],
                    caption: String::new(),
                    caption_error: None,
                })
                .collect(),
            alignment: BTreeMap::new(),
            dir: PathBuf::new(),
        }
    }

    #[test]
    fn interval_rule() {
        let map = align_keyframes(&lecture(&[0.0, 60.0], &[10.0, 59.0, 61.0]));
        assert_eq!(map[&1], vec![1, 2]);
        assert_eq!(map[&2], vec![3]);
    }

    #[test]
    fn single_keyframe_owns_everything() {
        let map = align_keyframes(&lecture(&[5.0], &[0.0, 10.0, 20.0]));
        assert_eq!(map[&1], vec![1, 2, 3]);
    }

    #[test]
    fn start_on_keyframe_time_goes_to_that_keyframe() {
        let map = align_keyframes(&lecture(&[0.0, 60.0], &[30.0, 60.0]));
        assert_eq!(map[&2], vec![2]);
    }

    #[test]
    fn empty_intervals_are_kept() {
        let map = align_keyframes(&lecture(&[0.0, 1.0, 2.0, 50.0], &[0.0, 60.0]));
        assert_eq!(map[&2], Vec::<usize>::new());
        assert_eq!(map[&4], vec![2]);
    }
}
