//! Deterministic in-process annotators.
//!
//! Each mock is a pure function of the clip bytes and, for synthetic clips,
//! the conditioning recorded in their provenance.

use std::collections::BTreeMap;

use serde_json::Value;

use super::{AnnotationInput, AnnotationPayload};
use crate::enrichment::ocr::{NormRect, OcrFrameBoxes};
use crate::enrichment::{
    categorize_motion, detect_scenes, score_motion, DEFAULT_CUT_THRESHOLD, DEFAULT_MIN_SCENE_FRAMES,
};
use crate::error::{Error, Result};
use crate::model::container::decode_clip_container;
use crate::model::{AnnotatorKind, MotionCategory};

pub const BUILTIN_ANNOTATORS: &[(&str, AnnotatorKind)] = &[
    ("mock_caption", AnnotatorKind::Caption),
    ("mock_ocr", AnnotatorKind::Ocr),
    ("mock_tags", AnnotatorKind::Tags),
    ("mock_attributes", AnnotatorKind::Custom),
];

pub(super) fn builtin_kind(name: &str) -> Option<AnnotatorKind> {
    BUILTIN_ANNOTATORS.iter().find(|(n, _)| *n == name).map(|(_, k)| *k)
}

pub(super) fn run(name: &str, input: &AnnotationInput<'_>) -> Result<AnnotationPayload> {
    match name {
        "mock_caption" => mock_caption(input).map(AnnotationPayload::Caption),
        "mock_ocr" => Ok(AnnotationPayload::Ocr(mock_ocr(input))),
        "mock_tags" => Ok(AnnotationPayload::Tags(mock_tags(input))),
        "mock_attributes" => Ok(AnnotationPayload::Custom(mock_attributes(input))),
        other => Err(Error::UnknownAnnotator(format!("builtin:{other}"))),
    }
}

fn mock_caption(input: &AnnotationInput<'_>) -> Result<String> {
    let (category, scenes) = match input.signals {
        Some(s) => (s.motion_category, s.scene_count),
        None => {
            let clip = decode_clip_container(input.container)?;
            let scenes = detect_scenes(&clip, DEFAULT_CUT_THRESHOLD, DEFAULT_MIN_SCENE_FRAMES).len() + 1;
            let category = match score_motion(&clip) {
                Ok(score) => categorize_motion(score)?,
                Err(Error::MotionUndefined(_)) => MotionCategory::Low,
                Err(e) => return Err(e),
            };
            (category, scenes)
        }
    };
    Ok(format!("clip {} motion {} scenes {}", input.clip_id.short(), category.as_str(), scenes))
}

fn mock_ocr(input: &AnnotationInput<'_>) -> Vec<OcrFrameBoxes> {
    let boxes: Vec<NormRect> = input
        .conditioning
        .get("text_overlay_boxes")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or_default();
    if boxes.is_empty() {
        return Vec::new();
    }
    input.sampled_frames.iter().map(|&frame_index| OcrFrameBoxes { frame_index, boxes: boxes.clone() }).collect()
}

fn mock_tags(input: &AnnotationInput<'_>) -> Vec<String> {
    let mut tags = Vec::new();
    if let Some(Value::String(style)) = input.conditioning.get("style_label") {
        tags.push(style.to_lowercase());
    }
    if let Some(Value::Array(extra)) = input.conditioning.get("tags") {
        tags.extend(extra.iter().filter_map(Value::as_str).map(str::to_lowercase));
    }
    tags.sort();
    tags.dedup();
    tags
}

fn mock_attributes(input: &AnnotationInput<'_>) -> BTreeMap<String, Value> {
    ["language", "safety_flags"]
        .into_iter()
        .filter_map(|key| input.conditioning.get(key).map(|v| (key.to_owned(), v.clone())))
        .collect()
}
