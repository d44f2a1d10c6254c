//! Quality scoring and the per-job policy gate.

use serde::{Deserialize, Serialize};

use crate::model::duration::ClipDuration;
use crate::model::{ClipId, CookRequest, EnrichmentMetadata, ResolutionBucket};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityWeights {
    pub resolution: f64,
    pub caption: f64,
    pub scene: f64,
}

impl Default for QualityWeights {
    fn default() -> Self {
        QualityWeights { resolution: 0.4, caption: 0.3, scene: 0.3 }
    }
}

/// Caption length at which the caption term saturates.
pub const CAPTION_SATURATION_WORDS: f64 = 50.0;

pub fn resolution_norm(bucket: ResolutionBucket) -> f64 {
    match bucket {
        ResolutionBucket::Lt480p => 0.25,
        ResolutionBucket::P480 => 0.5,
        ResolutionBucket::P720 => 0.75,
        ResolutionBucket::P1080 | ResolutionBucket::K4 => 1.0,
    }
}

pub fn quality_score(metadata: &EnrichmentMetadata, weights: &QualityWeights) -> f64 {
    let caption = (metadata.caption_word_count as f64 / CAPTION_SATURATION_WORDS).min(1.0);
    let scene = 1.0 / metadata.scenes.len().max(1) as f64;
    let q = weights.resolution * resolution_norm(metadata.resolution_bucket)
        + weights.caption * caption
        + weights.scene * scene;
    q.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Quality,
    Compliance,
    Duration,
    Language,
}

/// Checks one clip against the request's gate; returns its quality score
/// when it passes.
pub fn policy_check(
    metadata: &EnrichmentMetadata,
    duration: ClipDuration,
    request: &CookRequest,
    weights: &QualityWeights,
) -> Result<f64, DropReason> {
    let q = quality_score(metadata, weights);
    if q < request.quality_threshold {
        return Err(DropReason::Quality);
    }
    if !metadata.safety_flags.is_disjoint(&request.prefilters.excluded_safety_flags) {
        return Err(DropReason::Compliance);
    }
    if !request.prefilters.admits_duration(duration) {
        return Err(DropReason::Duration);
    }
    if !request.prefilters.languages.allows(&metadata.language) {
        return Err(DropReason::Language);
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutcome {
    /// Kept clips in input order, with their quality scores.
    pub kept: Vec<(ClipId, f64)>,
    pub dropped: Vec<(ClipId, DropReason)>,
}

pub fn policy_filter<'a>(
    candidates: impl IntoIterator<Item = (&'a EnrichmentMetadata, ClipDuration)>,
    request: &CookRequest,
    weights: &QualityWeights,
) -> PolicyOutcome {
    let mut out = PolicyOutcome { kept: Vec::new(), dropped: Vec::new() };
    for (metadata, duration) in candidates {
        match policy_check(metadata, duration, request, weights) {
            Ok(q) => out.kept.push((metadata.clip_id.clone(), q)),
            Err(reason) => out.dropped.push((metadata.clip_id.clone(), reason)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{compute_clip_id, MotionCategory, METADATA_SCHEMA_VERSION};
    use std::collections::{BTreeMap, BTreeSet};

    fn meta(bucket: ResolutionBucket, words: u32, scenes: u32) -> EnrichmentMetadata {
        EnrichmentMetadata {
            clip_id: compute_clip_id(&[words as u8, scenes as u8]),
            schema_version: METADATA_SCHEMA_VERSION,
            scenes: (0..scenes).map(|s| [s * 10, s * 10 + 10]).collect(),
            motion_intensity: 0.0,
            motion_category: MotionCategory::Low,
            ocr_text_area: 0.0,
            ocr_box_count: 0.0,
            caption: vec!["w"; words as usize].join(" "),
            caption_word_count: words,
            tags: BTreeSet::new(),
            language: "und".into(),
            safety_flags: BTreeSet::new(),
            resolution_bucket: bucket,
            annotator_versions: BTreeMap::new(),
            pending_annotations: BTreeSet::new(),
        }
    }

    #[test]
    fn worked_examples() {
        let w = QualityWeights::default();
        assert!((quality_score(&meta(ResolutionBucket::P1080, 60, 1), &w) - 1.0).abs() < 1e-12);
        assert!((quality_score(&meta(ResolutionBucket::Lt480p, 0, 4), &w) - 0.175).abs() < 1e-12);
        let caption_only = QualityWeights { resolution: 0.0, caption: 1.0, scene: 0.0 };
        assert_eq!(quality_score(&meta(ResolutionBucket::P720, 25, 1), &caption_only), 0.5);
    }

    #[test]
    fn gate_reasons() {
        let w = QualityWeights::default();
        let d = ClipDuration::new(40, 10, 1);
        let mut req = CookRequest::new("q", 1, 1.0);
        req.quality_threshold = 0.5;
        let low = meta(ResolutionBucket::Lt480p, 0, 4);
        assert_eq!(policy_check(&low, d, &req, &w), Err(DropReason::Quality));

        req.quality_threshold = 0.0;
        let mut flagged = meta(ResolutionBucket::P1080, 10, 1);
        flagged.safety_flags.insert("nsfw".into());
        req.prefilters.excluded_safety_flags.insert("nsfw".into());
        assert_eq!(policy_check(&flagged, d, &req, &w), Err(DropReason::Compliance));
        assert_eq!(policy_check(&low, ClipDuration::new(19, 10, 1), &req, &w), Err(DropReason::Duration));

        let out = policy_filter([(&low, d), (&flagged, d), (&low, d)], &req, &w);
        assert_eq!(out.kept.len(), 2);
        assert_eq!(out.dropped, vec![(flagged.clip_id.clone(), DropReason::Compliance)]);
    }
}
