//! Annotation center: a registry of pluggable annotators and the client side
//! of the annotator wire protocol.
//!
//! An annotator is addressed either as `builtin:<name>` (deterministic
//! in-process mocks) or as an HTTP base URL that serves `POST /annotate`.

mod builtin;
mod wire;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Condvar, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::enrichment::ocr::{aggregate_ocr, OcrAggregate, OcrFrameBoxes};
use crate::error::{Error, Result};
use crate::model::{AnnotatorKind, ClipId, MotionCategory, Timestamp};

pub use builtin::BUILTIN_ANNOTATORS;
pub use wire::{AnnotateRequest, AnnotateResponse};

pub const BUILTIN_PREFIX: &str = "builtin:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorDescriptor {
    pub annotator_id: String,
    pub kind: AnnotatorKind,
    pub endpoint: String,
    pub version: String,
    pub timeout_s: f64,
    pub enabled: bool,
}

impl AnnotatorDescriptor {
    pub fn builtin(name: &str, kind: AnnotatorKind) -> Self {
        AnnotatorDescriptor {
            annotator_id: name.to_owned(),
            kind,
            endpoint: format!("{BUILTIN_PREFIX}{name}"),
            version: "1".to_owned(),
            timeout_s: 5.0,
            enabled: true,
        }
    }

    /// Value recorded in `annotator_versions`.
    pub fn version_tag(&self) -> String {
        format!("{}@{}", self.annotator_id, self.version)
    }

    fn builtin_name(&self) -> Option<&str> {
        self.endpoint.strip_prefix(BUILTIN_PREFIX)
    }
}

/// Kind-specific annotation payload.
#[derive(Debug, Clone, PartialEq)]
pub enum AnnotationPayload {
    Caption(String),
    Ocr(Vec<OcrFrameBoxes>),
    Tags(Vec<String>),
    Custom(BTreeMap<String, Value>),
}

impl AnnotationPayload {
    pub fn kind(&self) -> AnnotatorKind {
        match self {
            AnnotationPayload::Caption(_) => AnnotatorKind::Caption,
            AnnotationPayload::Ocr(_) => AnnotatorKind::Ocr,
            AnnotationPayload::Tags(_) => AnnotatorKind::Tags,
            AnnotationPayload::Custom(_) => AnnotatorKind::Custom,
        }
    }

    /// Interprets a wire payload according to `kind`.
    pub fn from_value(kind: AnnotatorKind, value: Value) -> std::result::Result<Self, String> {
        let shape_err = |e: serde_json::Error| format!("{kind} payload has the wrong shape: {e}");
        Ok(match kind {
            AnnotatorKind::Caption => AnnotationPayload::Caption(serde_json::from_value(value).map_err(shape_err)?),
            AnnotatorKind::Ocr => AnnotationPayload::Ocr(serde_json::from_value(value).map_err(shape_err)?),
            AnnotatorKind::Tags => AnnotationPayload::Tags(serde_json::from_value(value).map_err(shape_err)?),
            AnnotatorKind::Custom => AnnotationPayload::Custom(serde_json::from_value(value).map_err(shape_err)?),
        })
    }

    pub fn to_value(&self) -> Value {
        match self {
            AnnotationPayload::Caption(text) => Value::String(text.clone()),
            AnnotationPayload::Ocr(frames) => serde_json::to_value(frames).expect("serializable"),
            AnnotationPayload::Tags(tags) => serde_json::to_value(tags).expect("serializable"),
            AnnotationPayload::Custom(map) => serde_json::to_value(map).expect("serializable"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub clip_id: ClipId,
    pub annotator_id: String,
    pub version: String,
    pub payload: AnnotationPayload,
    pub confidence: Option<f64>,
    pub produced_time: Timestamp,
}

impl AnnotationRecord {
    pub fn kind(&self) -> AnnotatorKind {
        self.payload.kind()
    }
}

#[derive(Serialize, Deserialize)]
struct AnnotationRecordRepr {
    clip_id: ClipId,
    annotator_id: String,
    version: String,
    kind: AnnotatorKind,
    payload: Value,
    confidence: Option<f64>,
    produced_time: Timestamp,
}

impl Serialize for AnnotationRecord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        AnnotationRecordRepr {
            clip_id: self.clip_id.clone(),
            annotator_id: self.annotator_id.clone(),
            version: self.version.clone(),
            kind: self.kind(),
            payload: self.payload.to_value(),
            confidence: self.confidence,
            produced_time: self.produced_time,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AnnotationRecord {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = AnnotationRecordRepr::deserialize(d)?;
        let payload = AnnotationPayload::from_value(repr.kind, repr.payload).map_err(serde::de::Error::custom)?;
        Ok(AnnotationRecord {
            clip_id: repr.clip_id,
            annotator_id: repr.annotator_id,
            version: repr.version,
            payload,
            confidence: repr.confidence,
            produced_time: repr.produced_time,
        })
    }
}

/// Signals already computed by the pipeline. Built-in mocks use them instead
/// of recomputing from the container; both routes give the same answer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipSignals {
    pub motion_category: MotionCategory,
    pub scene_count: usize,
}

/// Everything an annotator may look at for one clip.
#[derive(Debug, Clone, Copy)]
pub struct AnnotationInput<'a> {
    pub clip_id: &'a ClipId,
    pub container: &'a [u8],
    pub sampled_frames: &'a [u32],
    /// Synthesis conditioning from the clip's provenance; empty for real clips.
    pub conditioning: &'a BTreeMap<String, Value>,
    pub signals: Option<ClipSignals>,
}

/// Counting gate bounding concurrent calls to one annotator.
#[derive(Debug)]
struct InflightGate {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

impl InflightGate {
    fn new(max: usize) -> Self {
        InflightGate { max: max.max(1), current: Mutex::new(0), freed: Condvar::new() }
    }

    fn enter(&self) -> GateGuard<'_> {
        let mut current = self.current.lock().unwrap();
        while *current >= self.max {
            current = self.freed.wait(current).unwrap();
        }
        *current += 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a InflightGate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.gate.current.lock().unwrap() -= 1;
        self.gate.freed.notify_one();
    }
}

pub const DEFAULT_INFLIGHT_CAP: usize = 4;

#[derive(Debug)]
pub struct AnnotationCenter {
    registry: RwLock<Vec<AnnotatorDescriptor>>,
    gates: Mutex<BTreeMap<String, Arc<InflightGate>>>,
    inflight_cap: usize,
}

impl Default for AnnotationCenter {
    fn default() -> Self {
        AnnotationCenter::new(Vec::new())
    }
}

impl AnnotationCenter {
    pub fn new(descriptors: Vec<AnnotatorDescriptor>) -> Self {
        AnnotationCenter {
            registry: RwLock::new(descriptors),
            gates: Mutex::new(BTreeMap::new()),
            inflight_cap: DEFAULT_INFLIGHT_CAP,
        }
    }

    /// The caption, OCR and tag mocks, all enabled.
    pub fn with_builtin_mocks() -> Self {
        AnnotationCenter::new(vec![
            AnnotatorDescriptor::builtin("mock_caption", AnnotatorKind::Caption),
            AnnotatorDescriptor::builtin("mock_ocr", AnnotatorKind::Ocr),
            AnnotatorDescriptor::builtin("mock_tags", AnnotatorKind::Tags),
        ])
    }

    pub fn set_inflight_cap(&mut self, cap: usize) {
        self.inflight_cap = cap.max(1);
    }

    pub fn descriptors(&self) -> Vec<AnnotatorDescriptor> {
        let mut out = self.registry.read().unwrap().clone();
        out.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
        out
    }

    pub fn descriptor(&self, annotator_id: &str) -> Option<AnnotatorDescriptor> {
        self.registry.read().unwrap().iter().find(|d| d.annotator_id == annotator_id).cloned()
    }

    /// Registers an annotator. A new enabled caption, OCR or tag annotator
    /// disables the previous one of its kind, which stays listed.
    pub fn register(&self, descriptor: AnnotatorDescriptor) -> Result<String> {
        if descriptor.annotator_id.is_empty() {
            return Err(Error::InvalidAnnotator("annotator_id is empty".into()));
        }
        if descriptor.version.is_empty() {
            return Err(Error::InvalidAnnotator("version is empty".into()));
        }
        if !(descriptor.timeout_s > 0.0 && descriptor.timeout_s.is_finite()) {
            return Err(Error::InvalidAnnotator("timeout_s must be positive".into()));
        }
        if let Some(name) = descriptor.builtin_name() {
            match builtin::builtin_kind(name) {
                None => return Err(Error::UnknownAnnotator(descriptor.endpoint.clone())),
                Some(kind) if kind != descriptor.kind => {
                    return Err(Error::InvalidAnnotator(format!(
                        "{} produces {kind} annotations, not {}",
                        descriptor.endpoint, descriptor.kind
                    )))
                }
                Some(_) => {}
            }
        } else if !(descriptor.endpoint.starts_with("http://") || descriptor.endpoint.starts_with("https://")) {
            return Err(Error::InvalidAnnotator(format!(
                "endpoint `{}` is neither builtin:<name> nor an http(s) URL",
                descriptor.endpoint
            )));
        }

        let mut registry = self.registry.write().unwrap();
        if registry.iter().any(|d| d.annotator_id == descriptor.annotator_id) {
            return Err(Error::AnnotatorExists(descriptor.annotator_id));
        }
        if descriptor.enabled && descriptor.kind != AnnotatorKind::Custom {
            for prior in registry.iter_mut().filter(|d| d.kind == descriptor.kind) {
                prior.enabled = false;
            }
        }
        let id = descriptor.annotator_id.clone();
        registry.push(descriptor);
        Ok(id)
    }

    /// Enabled annotators of `kind`, ordered by id.
    pub fn enabled_for(&self, kind: AnnotatorKind) -> Vec<AnnotatorDescriptor> {
        let mut out: Vec<_> =
            self.registry.read().unwrap().iter().filter(|d| d.enabled && d.kind == kind).cloned().collect();
        out.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
        out
    }

    /// Annotates with the enabled annotator of `kind` (the first by id for
    /// `custom`).
    pub fn annotate(&self, input: &AnnotationInput<'_>, kind: AnnotatorKind) -> Result<AnnotationRecord> {
        let descriptor =
            self.enabled_for(kind).into_iter().next().ok_or_else(|| Error::NoAnnotator(kind.to_string()))?;
        self.annotate_with(&descriptor, input)
    }

    pub fn annotate_with(
        &self,
        descriptor: &AnnotatorDescriptor,
        input: &AnnotationInput<'_>,
    ) -> Result<AnnotationRecord> {
        let gate = self.gate(&descriptor.annotator_id);
        let _guard = gate.enter();
        let (payload, confidence) = match descriptor.builtin_name() {
            Some(name) => (builtin::run(name, input)?, None),
            None => wire::call(descriptor, input)?,
        };
        Ok(AnnotationRecord {
            clip_id: input.clip_id.clone(),
            annotator_id: descriptor.annotator_id.clone(),
            version: descriptor.version.clone(),
            payload,
            confidence,
            produced_time: Timestamp::now(),
        })
    }

    fn gate(&self, annotator_id: &str) -> Arc<InflightGate> {
        self.gates
            .lock()
            .unwrap()
            .entry(annotator_id.to_owned())
            .or_insert_with(|| Arc::new(InflightGate::new(self.inflight_cap)))
            .clone()
    }
}

/// Metadata fields derived from a set of annotation records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MergedAnnotations {
    pub caption: Option<String>,
    pub tags: BTreeSet<String>,
    pub ocr: Option<OcrAggregate>,
    pub language: Option<String>,
    pub safety_flags: BTreeSet<String>,
    pub annotator_versions: BTreeMap<String, String>,
}

/// Key under which an annotation is recorded in `annotator_versions`.
pub fn version_key(kind: AnnotatorKind, annotator_id: &str) -> String {
    match kind {
        AnnotatorKind::Custom => format!("custom:{annotator_id}"),
        other => other.to_string(),
    }
}

/// Merges annotation records for one clip.
///
/// Caption and OCR take a single winning record: enabled annotators beat
/// disabled ones, then the latest `produced_time`, then the later record in
/// the input. Tags are the union of all tag records. Custom records may carry
/// `language` (string) and `safety_flags` (list of strings).
pub fn merge_annotations(
    records: &[AnnotationRecord],
    registry: &[AnnotatorDescriptor],
    sampled_frame_count: usize,
) -> Result<MergedAnnotations> {
    if let Some(first) = records.first() {
        if records.iter().any(|r| r.clip_id != first.clip_id) {
            return Err(Error::MergeMismatch);
        }
    }
    let enabled = |id: &str| registry.iter().any(|d| d.annotator_id == id && d.enabled);
    let winner = |kind: AnnotatorKind| {
        records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.kind() == kind)
            .max_by_key(|(pos, r)| (enabled(&r.annotator_id), r.produced_time, *pos))
            .map(|(_, r)| r)
    };

    let mut merged = MergedAnnotations::default();
    if let Some(record) = winner(AnnotatorKind::Caption) {
        if let AnnotationPayload::Caption(text) = &record.payload {
            merged.caption = Some(text.clone());
        }
        merged.annotator_versions.insert(
            version_key(AnnotatorKind::Caption, &record.annotator_id),
            format!("{}@{}", record.annotator_id, record.version),
        );
    }
    if let Some(record) = winner(AnnotatorKind::Ocr) {
        if let AnnotationPayload::Ocr(frames) = &record.payload {
            merged.ocr = Some(aggregate_ocr(frames, sampled_frame_count)?);
        }
        merged.annotator_versions.insert(
            version_key(AnnotatorKind::Ocr, &record.annotator_id),
            format!("{}@{}", record.annotator_id, record.version),
        );
    }
    let mut tag_versions = BTreeSet::new();
    for record in records {
        match &record.payload {
            AnnotationPayload::Tags(tags) => {
                merged.tags.extend(tags.iter().map(|t| t.trim().to_lowercase()).filter(|t| !t.is_empty()));
                tag_versions.insert(format!("{}@{}", record.annotator_id, record.version));
            }
            AnnotationPayload::Custom(fields) => {
                if let Some(Value::String(lang)) = fields.get("language") {
                    merged.language = Some(lang.clone());
                }
                if let Some(Value::Array(flags)) = fields.get("safety_flags") {
                    merged.safety_flags.extend(flags.iter().filter_map(Value::as_str).map(str::to_lowercase));
                }
                merged.annotator_versions.insert(
                    version_key(AnnotatorKind::Custom, &record.annotator_id),
                    format!("{}@{}", record.annotator_id, record.version),
                );
            }
            _ => {}
        }
    }
    if !tag_versions.is_empty() {
        merged
            .annotator_versions
            .insert(AnnotatorKind::Tags.to_string(), tag_versions.into_iter().collect::<Vec<_>>().join(","));
    }
    Ok(merged)
}
