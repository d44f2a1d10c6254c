//! Shared domain types.
//!
//! Every type here is an immutable value once built, so they can be shared
//! across threads freely.

pub mod canonical;
pub mod container;
pub mod duration;
mod time;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::FieldError;

pub use time::Timestamp;

/// SHA-256 of a clip's container bytes, lowercase hex.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ClipId(String);

impl ClipId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// First eight hex digits, used in mock captions and log lines.
    pub fn short(&self) -> &str {
        &self.0[..8]
    }
}

impl fmt::Debug for ClipId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ClipId({})", self.short())
    }
}

impl fmt::Display for ClipId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for ClipId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            Ok(ClipId(s.to_owned()))
        } else {
            Err(format!("`{s}` is not a 64-char lowercase hex digest"))
        }
    }
}

impl<'de> Deserialize<'de> for ClipId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn compute_clip_id(container_bytes: &[u8]) -> ClipId {
    ClipId(hex::encode(Sha256::digest(container_bytes)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Retrieved,
    Uploaded,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipStatus {
    Raw,
    Enriched,
    Indexed,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: ClipId,
    pub width: u32,
    pub height: u32,
    pub fps_num: u32,
    pub fps_den: u32,
    pub frame_count: u32,
    pub duration_s: f64,
    pub origin: Origin,
    pub parent_clip_id: Option<ClipId>,
    pub ingest_time: Timestamp,
    pub status: ClipStatus,
}

impl ClipRecord {
    /// Builds a raw record from a container's bytes.
    pub fn from_container(
        bytes: &[u8],
        origin: Origin,
        ingest_time: Timestamp,
    ) -> Result<Self, container::ContainerError> {
        let header = container::read_header(bytes)?;
        Ok(ClipRecord {
            clip_id: compute_clip_id(bytes),
            width: header.width,
            height: header.height,
            fps_num: header.fps_num,
            fps_den: header.fps_den,
            frame_count: header.frame_count,
            duration_s: duration::seconds(header.frame_count, header.fps_num, header.fps_den),
            origin,
            parent_clip_id: None,
            ingest_time,
            status: ClipStatus::Raw,
        })
    }

    pub fn clip_duration(&self) -> duration::ClipDuration {
        duration::ClipDuration::new(self.frame_count, self.fps_num, self.fps_den)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionCategory {
    Low,
    Medium,
    High,
}

impl MotionCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            MotionCategory::Low => "low",
            MotionCategory::Medium => "medium",
            MotionCategory::High => "high",
        }
    }
}

impl FromStr for MotionCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(MotionCategory::Low),
            "medium" => Ok(MotionCategory::Medium),
            "high" => Ok(MotionCategory::High),
            other => Err(format!("unknown motion category `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ResolutionBucket {
    #[serde(rename = "lt480p")]
    Lt480p,
    #[serde(rename = "480p")]
    P480,
    #[serde(rename = "720p")]
    P720,
    #[serde(rename = "1080p")]
    P1080,
    #[serde(rename = "4k")]
    K4,
}

impl ResolutionBucket {
    pub const ALL: [ResolutionBucket; 5] = [
        ResolutionBucket::Lt480p,
        ResolutionBucket::P480,
        ResolutionBucket::P720,
        ResolutionBucket::P1080,
        ResolutionBucket::K4,
    ];

    /// Keyed on the smaller frame dimension.
    pub fn for_dimensions(width: u32, height: u32) -> Self {
        match width.min(height) {
            0..480 => ResolutionBucket::Lt480p,
            480..720 => ResolutionBucket::P480,
            720..1080 => ResolutionBucket::P720,
            1080..2160 => ResolutionBucket::P1080,
            _ => ResolutionBucket::K4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ResolutionBucket::Lt480p => "lt480p",
            ResolutionBucket::P480 => "480p",
            ResolutionBucket::P720 => "720p",
            ResolutionBucket::P1080 => "1080p",
            ResolutionBucket::K4 => "4k",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotatorKind {
    Caption,
    Ocr,
    Tags,
    Custom,
}

impl AnnotatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AnnotatorKind::Caption => "caption",
            AnnotatorKind::Ocr => "ocr",
            AnnotatorKind::Tags => "tags",
            AnnotatorKind::Custom => "custom",
        }
    }
}

impl fmt::Display for AnnotatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnnotatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "caption" => Ok(AnnotatorKind::Caption),
            "ocr" => Ok(AnnotatorKind::Ocr),
            "tags" => Ok(AnnotatorKind::Tags),
            "custom" => Ok(AnnotatorKind::Custom),
            other => Err(format!("unknown annotator kind `{other}`")),
        }
    }
}

/// Half-open frame range `[start, end)`.
pub type SceneRange = [u32; 2];

pub const METADATA_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentMetadata {
    pub clip_id: ClipId,
    pub schema_version: u32,
    pub scenes: Vec<SceneRange>,
    pub motion_intensity: f64,
    pub motion_category: MotionCategory,
    pub ocr_text_area: f64,
    pub ocr_box_count: f64,
    pub caption: String,
    pub caption_word_count: u32,
    pub tags: BTreeSet<String>,
    pub language: String,
    pub safety_flags: BTreeSet<String>,
    pub resolution_bucket: ResolutionBucket,
    pub annotator_versions: BTreeMap<String, String>,
    /// Annotation kinds whose annotator failed transiently; the fields they
    /// feed hold neutral defaults until a retry succeeds.
    #[serde(default)]
    pub pending_annotations: BTreeSet<AnnotatorKind>,
}

pub fn word_count(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}

impl EnrichmentMetadata {
    /// Checks the record's internal invariants against the clip's frame count.
    pub fn validate(&self, frame_count: u32) -> Result<(), String> {
        let mut expected_start = 0;
        for scene in &self.scenes {
            if scene[0] != expected_start || scene[1] <= scene[0] {
                return Err(format!("scene {scene:?} breaks the partition"));
            }
            expected_start = scene[1];
        }
        if expected_start != frame_count {
            return Err(format!("scenes cover [0, {expected_start}) but clip has {frame_count} frames"));
        }
        if !(0.0..=100.0).contains(&self.motion_intensity) {
            return Err(format!("motion_intensity {} out of range", self.motion_intensity));
        }
        if !(0.0..=1.0).contains(&self.ocr_text_area) {
            return Err(format!("ocr_text_area {} out of range", self.ocr_text_area));
        }
        if self.ocr_box_count < 0.0 || !self.ocr_box_count.is_finite() {
            return Err(format!("ocr_box_count {} invalid", self.ocr_box_count));
        }
        if self.caption_word_count != word_count(&self.caption) {
            return Err("caption_word_count disagrees with caption".into());
        }
        if crate::enrichment::categorize_motion(self.motion_intensity).ok() != Some(self.motion_category) {
            return Err("motion_category inconsistent with motion_intensity".into());
        }
        if self.tags.iter().any(|t| t.chars().any(char::is_uppercase)) {
            return Err("tags must be lowercase".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProvenanceKind {
    Crawled,
    Uploaded,
    Synthetic,
}

impl ProvenanceKind {
    pub fn origin(self) -> Origin {
        match self {
            ProvenanceKind::Crawled => Origin::Retrieved,
            ProvenanceKind::Uploaded => Origin::Uploaded,
            ProvenanceKind::Synthetic => Origin::Synthetic,
        }
    }
}

/// Conditioning key that references a keyframe taken from a seed clip.
pub const KEYFRAME_KEY: &str = "keyframe_color";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceChain {
    pub kind: ProvenanceKind,
    pub source_id: String,
    pub locator: String,
    pub crawl_job_id: Option<String>,
    pub license: String,
    pub seed_clip_ids: Vec<ClipId>,
    pub generator_id: Option<String>,
    pub generator_version: Option<String>,
    pub conditioning: BTreeMap<String, serde_json::Value>,
    pub created_time: Timestamp,
}

impl ProvenanceChain {
    pub fn validate(&self) -> Result<(), String> {
        if self.source_id.is_empty() {
            return Err("source_id is empty".into());
        }
        match self.kind {
            ProvenanceKind::Synthetic => {
                if self.generator_id.as_deref().is_none_or(str::is_empty) {
                    return Err("synthetic provenance needs a generator_id".into());
                }
                if self.generator_version.as_deref().is_none_or(str::is_empty) {
                    return Err("synthetic provenance needs a generator_version".into());
                }
                if self.seed_clip_ids.is_empty() && self.conditioning.contains_key(KEYFRAME_KEY) {
                    return Err("keyframe conditioning without seed clips".into());
                }
            }
            _ => {
                if !self.seed_clip_ids.is_empty()
                    || self.generator_id.is_some()
                    || self.generator_version.is_some()
                    || !self.conditioning.is_empty()
                {
                    return Err("non-synthetic provenance carries generator fields".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LanguageFilter {
    #[default]
    Any,
    Only(BTreeSet<String>),
}

impl LanguageFilter {
    pub fn allows(&self, language: &str) -> bool {
        match self {
            LanguageFilter::Any => true,
            LanguageFilter::Only(set) => set.contains(language),
        }
    }
}

impl Serialize for LanguageFilter {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            LanguageFilter::Any => serializer.serialize_str("any"),
            LanguageFilter::Only(set) => set.serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for LanguageFilter {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Word(String),
            Set(BTreeSet<String>),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Word(w) if w == "any" => Ok(LanguageFilter::Any),
            Repr::Word(w) => Err(serde::de::Error::custom(format!("languages must be \"any\" or a list, got `{w}`"))),
            Repr::Set(set) => Ok(LanguageFilter::Only(set)),
        }
    }
}

pub const MIN_CLIP_SECONDS: f64 = 2.0;

fn default_min_duration() -> f64 {
    MIN_CLIP_SECONDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prefilters {
    #[serde(default = "default_min_duration")]
    pub min_duration_s: f64,
    #[serde(default)]
    pub max_duration_s: Option<f64>,
    #[serde(default)]
    pub languages: LanguageFilter,
    #[serde(default)]
    pub excluded_safety_flags: BTreeSet<String>,
    /// Must be set to lower `min_duration_s` below the two-second floor.
    #[serde(default)]
    pub allow_short_clips: bool,
}

impl Default for Prefilters {
    fn default() -> Self {
        Prefilters {
            min_duration_s: MIN_CLIP_SECONDS,
            max_duration_s: None,
            languages: LanguageFilter::Any,
            excluded_safety_flags: BTreeSet::new(),
            allow_short_clips: false,
        }
    }
}

impl Prefilters {
    /// Same as the defaults but with no duration floor at all.
    pub fn unrestricted() -> Self {
        Prefilters { min_duration_s: 0.0, allow_short_clips: true, ..Prefilters::default() }
    }

    pub fn admits_duration(&self, duration: duration::ClipDuration) -> bool {
        duration.at_least(self.min_duration_s) && self.max_duration_s.is_none_or(|max| duration.at_most(max))
    }

    pub fn validate(&self, errors: &mut Vec<FieldError>) {
        if !self.min_duration_s.is_finite() || self.min_duration_s < 0.0 {
            errors.push(FieldError::new("prefilters.min_duration_s", "must be a non-negative number"));
        } else if self.min_duration_s < MIN_CLIP_SECONDS && !self.allow_short_clips {
            errors
                .push(FieldError::new("prefilters.min_duration_s", "below 2.0 requires prefilters.allow_short_clips"));
        }
        if let Some(max) = self.max_duration_s {
            if !max.is_finite() || max < self.min_duration_s {
                errors.push(FieldError::new("prefilters.max_duration_s", "must be >= min_duration_s"));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceMode {
    Crawled,
    Uploaded,
    #[default]
    Hybrid,
}

impl SourceMode {
    /// Clip origins eligible for the retrieval channel. Synthetic clips are
    /// never retrieved, so re-injected output cannot feed back into the
    /// retrieval half of a later identical job.
    pub fn admits(self, origin: Origin) -> bool {
        match self {
            SourceMode::Crawled => origin == Origin::Retrieved,
            SourceMode::Uploaded => origin == Origin::Uploaded,
            SourceMode::Hybrid => matches!(origin, Origin::Retrieved | Origin::Uploaded),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShortfallPolicy {
    #[default]
    Fail,
    BackfillSynthesis,
    Truncate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CookRequest {
    pub query: String,
    pub scale: u32,
    pub retrieval_ratio: f64,
    #[serde(default)]
    pub quality_threshold: f64,
    #[serde(default)]
    pub prefilters: Prefilters,
    #[serde(default)]
    pub source_mode: SourceMode,
    #[serde(default)]
    pub shortfall_policy: ShortfallPolicy,
    #[serde(default)]
    pub seed: u64,
}

impl CookRequest {
    pub fn new(query: impl Into<String>, scale: u32, retrieval_ratio: f64) -> Self {
        CookRequest {
            query: query.into(),
            scale,
            retrieval_ratio,
            quality_threshold: 0.0,
            prefilters: Prefilters::default(),
            source_mode: SourceMode::default(),
            shortfall_policy: ShortfallPolicy::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), Vec<FieldError>> {
        let mut errors = Vec::new();
        if self.query.trim().is_empty() {
            errors.push(FieldError::new("query", "must not be empty"));
        }
        if self.scale < 1 {
            errors.push(FieldError::new("scale", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.retrieval_ratio) {
            errors.push(FieldError::new("retrieval_ratio", "must be within [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.quality_threshold) {
            errors.push(FieldError::new("quality_threshold", "must be within [0, 1]"));
        }
        self.prefilters.validate(&mut errors);
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Retrieved,
    Synthesized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub channel: Channel,
    pub rank_score: f64,
    pub quality_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: ClipId,
    pub container_digest: String,
    pub byte_length: u64,
    pub duration_s: f64,
    pub metadata: EnrichmentMetadata,
    pub provenance: ProvenanceChain,
    pub selection: Selection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub retrieved: u32,
    pub synthesized: u32,
    pub dropped_by_policy: u32,
}

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub job_id: String,
    pub request: CookRequest,
    pub engine_version: String,
    pub created_time: Timestamp,
    pub entries: Vec<ManifestEntry>,
    pub counts: ManifestCounts,
    pub replay_command: String,
}

impl Manifest {
    pub fn to_canonical_json(&self) -> String {
        canonical::to_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
