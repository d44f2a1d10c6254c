//! Clip enrichment: scene segmentation, motion scoring, OCR and caption
//! annotation.
//!
//! Enrichment annotates rather than filters. The one structural filter is
//! the two-second minimum applied to scene segments.

pub mod luma;
pub mod motion;
pub mod ocr;
pub mod scenes;

use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;
use tracing::warn;

use crate::annotation::{
    merge_annotations, AnnotationCenter, AnnotationInput, AnnotationPayload, AnnotationRecord, ClipSignals,
};
use crate::error::{Error, Result};
use crate::model::container::decode_clip_container;
use crate::model::{
    word_count, AnnotatorKind, ClipRecord, ClipStatus, EnrichmentMetadata, ResolutionBucket, METADATA_SCHEMA_VERSION,
};

pub use motion::{categorize_motion, score_motion};
pub use ocr::{aggregate_ocr, NormRect, OcrAggregate, OcrFrameBoxes};
pub use scenes::{
    detect_scenes, split_into_scene_clips, SceneClip, SceneCut, DEFAULT_CUT_THRESHOLD, DEFAULT_MIN_SCENE_FRAMES,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnrichConfig {
    pub cut_threshold: f64,
    pub min_scene_frames: usize,
}

impl Default for EnrichConfig {
    fn default() -> Self {
        EnrichConfig { cut_threshold: DEFAULT_CUT_THRESHOLD, min_scene_frames: DEFAULT_MIN_SCENE_FRAMES }
    }
}

#[derive(Debug, Clone)]
pub struct EnrichedClip {
    pub record: ClipRecord,
    pub bytes: Vec<u8>,
    pub metadata: EnrichmentMetadata,
    pub annotations: Vec<AnnotationRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct EnrichOutcome {
    pub clips: Vec<EnrichedClip>,
    pub dropped_short: usize,
}

/// Segments a raw clip into scenes and enriches every kept scene.
///
/// A clip without cuts yields a single segment whose bytes, and therefore
/// id, equal the input's; that segment carries no parent link.
pub fn enrich_container(
    record: &ClipRecord,
    bytes: &[u8],
    conditioning: &BTreeMap<String, Value>,
    center: &AnnotationCenter,
    config: &EnrichConfig,
) -> Result<EnrichOutcome> {
    let clip = decode_clip_container(bytes)?;
    let cuts = detect_scenes(&clip, config.cut_threshold, config.min_scene_frames);
    let split = split_into_scene_clips(&clip, record, &cuts);
    let mut outcome = EnrichOutcome { clips: Vec::with_capacity(split.kept.len()), dropped_short: split.dropped_short };
    for mut scene in split.kept {
        if scene.record.clip_id == record.clip_id {
            scene.record.parent_clip_id = record.parent_clip_id.clone();
        }
        outcome.clips.push(enrich_scene_clip(scene, conditioning, center, config)?);
    }
    Ok(outcome)
}

pub fn enrich_scene_clip(
    scene: SceneClip,
    conditioning: &BTreeMap<String, Value>,
    center: &AnnotationCenter,
    config: &EnrichConfig,
) -> Result<EnrichedClip> {
    let SceneClip { mut record, bytes, clip } = scene;
    let cuts = detect_scenes(&clip, config.cut_threshold, config.min_scene_frames);
    let scenes = scenes::scene_ranges(&cuts, clip.frame_count());
    let motion_intensity = match score_motion(&clip) {
        Ok(score) => score,
        Err(Error::MotionUndefined(_)) => 0.0,
        Err(e) => return Err(e),
    };
    let motion_category = categorize_motion(motion_intensity)?;
    let sampled = ocr::sampled_frames(record.frame_count, record.fps_num, record.fps_den);

    let input = AnnotationInput {
        clip_id: &record.clip_id,
        container: &bytes,
        sampled_frames: &sampled,
        conditioning,
        signals: Some(ClipSignals { motion_category, scene_count: scenes.len() }),
    };
    let mut annotations = Vec::new();
    let mut pending = BTreeSet::new();
    for kind in [AnnotatorKind::Caption, AnnotatorKind::Ocr, AnnotatorKind::Tags] {
        match center.annotate(&input, kind) {
            Ok(rec) => annotations.push(rec),
            Err(Error::NoAnnotator(_)) => {}
            Err(e) => {
                warn!(clip = %record.clip_id.short(), %kind, error = %e, "annotation failed; marking pending");
                pending.insert(kind);
            }
        }
    }
    for descriptor in center.enabled_for(AnnotatorKind::Custom) {
        match center.annotate_with(&descriptor, &input) {
            Ok(rec) => annotations.push(rec),
            Err(e) => {
                warn!(clip = %record.clip_id.short(), annotator = %descriptor.annotator_id, error = %e, "custom annotation failed");
                pending.insert(AnnotatorKind::Custom);
            }
        }
    }
    // An OCR answer that cannot be aggregated is treated like a failed call.
    annotations.retain(|rec| match &rec.payload {
        AnnotationPayload::Ocr(frames) => {
            let ok =
                frames.iter().all(|f| sampled.contains(&f.frame_index)) && aggregate_ocr(frames, sampled.len()).is_ok();
            if !ok {
                pending.insert(AnnotatorKind::Ocr);
            }
            ok
        }
        _ => true,
    });

    let merged = merge_annotations(&annotations, &center.descriptors(), sampled.len())?;
    let caption = merged.caption.unwrap_or_default();
    let ocr = merged.ocr.unwrap_or(OcrAggregate { ocr_text_area: 0.0, ocr_box_count: 0.0 });
    let metadata = EnrichmentMetadata {
        clip_id: record.clip_id.clone(),
        schema_version: METADATA_SCHEMA_VERSION,
        scenes,
        motion_intensity,
        motion_category,
        ocr_text_area: ocr.ocr_text_area,
        ocr_box_count: ocr.ocr_box_count,
        caption_word_count: word_count(&caption),
        caption,
        tags: merged.tags,
        language: merged.language.unwrap_or_else(|| "und".to_owned()),
        safety_flags: merged.safety_flags,
        resolution_bucket: ResolutionBucket::for_dimensions(record.width, record.height),
        annotator_versions: merged.annotator_versions,
        pending_annotations: pending,
    };
    record.status = ClipStatus::Enriched;
    Ok(EnrichedClip { record, bytes, metadata, annotations })
}
