//! Hard-cut detection on mean absolute luma difference.

use serde::{Deserialize, Serialize};

use super::luma::{clip_luma, LumaPlane};
use crate::model::container::Clip;
use crate::model::{ClipId, ClipRecord, ClipStatus, SceneRange, Timestamp};

pub const DEFAULT_CUT_THRESHOLD: f64 = 30.0;
pub const DEFAULT_MIN_SCENE_FRAMES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneCut {
    /// First frame of the new scene.
    pub frame_index: usize,
    pub score: f64,
}

/// Mean over pixels of `|Y_t - Y_{t-1}|`.
pub fn frame_difference(prev: &LumaPlane, cur: &LumaPlane) -> f64 {
    let total: u64 = prev.data.iter().zip(&cur.data).map(|(&a, &b)| a.abs_diff(b) as u64).sum();
    total as f64 / cur.data.len() as f64
}

pub fn detect_scenes(clip: &Clip, threshold: f64, min_scene_frames: usize) -> Vec<SceneCut> {
    let planes = clip_luma(clip);
    let mut cuts = Vec::new();
    let mut last_cut = 0usize;
    for t in 1..planes.len() {
        let d = frame_difference(&planes[t - 1], &planes[t]);
        if d >= threshold && t - last_cut >= min_scene_frames {
            cuts.push(SceneCut { frame_index: t, score: d });
            last_cut = t;
        }
    }
    cuts
}

/// Converts cut points into the half-open scene partition of `[0, frame_count)`.
pub fn scene_ranges(cuts: &[SceneCut], frame_count: usize) -> Vec<SceneRange> {
    let mut bounds = vec![0usize];
    bounds.extend(cuts.iter().map(|c| c.frame_index));
    bounds.push(frame_count);
    bounds.windows(2).filter(|w| w[1] > w[0]).map(|w| [w[0] as u32, w[1] as u32]).collect()
}

/// One scene segment re-encoded as its own container.
#[derive(Debug, Clone)]
pub struct SceneClip {
    pub record: ClipRecord,
    pub bytes: Vec<u8>,
    pub clip: Clip,
}

#[derive(Debug, Clone, Default)]
pub struct SplitOutcome {
    pub kept: Vec<SceneClip>,
    pub dropped_short: usize,
}

/// Partitions `clip` at `cuts`, dropping segments shorter than two seconds.
///
/// Segments keep the parent's origin and ingest time and link back to it
/// through `parent_clip_id`.
pub fn split_into_scene_clips(clip: &Clip, parent: &ClipRecord, cuts: &[SceneCut]) -> SplitOutcome {
    let mut outcome = SplitOutcome::default();
    for [start, end] in scene_ranges(cuts, clip.frame_count()) {
        let segment = clip.slice(start as usize, end as usize);
        let bytes = segment.encode().expect("segment of a valid clip encodes");
        let mut record = ClipRecord::from_container(&bytes, parent.origin, parent.ingest_time)
            .expect("freshly encoded container is valid");
        if !record.clip_duration().meets_floor() {
            outcome.dropped_short += 1;
            continue;
        }
        record.parent_clip_id = Some(parent.clip_id.clone());
        record.status = ClipStatus::Raw;
        outcome.kept.push(SceneClip { record, bytes, clip: segment });
    }
    outcome
}

/// Convenience for callers holding only an id, e.g. tests and fixtures.
pub fn parent_stub(clip_id: ClipId, clip: &Clip) -> ClipRecord {
    ClipRecord {
        clip_id,
        width: clip.width,
        height: clip.height,
        fps_num: clip.fps_num,
        fps_den: clip.fps_den,
        frame_count: clip.frame_count() as u32,
        duration_s: crate::model::duration::seconds(clip.frame_count() as u32, clip.fps_num, clip.fps_den),
        origin: crate::model::Origin::Retrieved,
        parent_clip_id: None,
        ingest_time: Timestamp::default(),
        status: ClipStatus::Raw,
    }
}
