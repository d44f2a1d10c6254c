//! Client side of the annotator protocol: `POST <endpoint>/annotate`.

use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AnnotationInput, AnnotationPayload, AnnotatorDescriptor};
use crate::error::{Error, Result};
use crate::http::{post_json, HttpFailure};
use crate::model::{canonical, AnnotatorKind, ClipId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateRequest {
    pub clip_id: ClipId,
    pub kind: AnnotatorKind,
    pub container_b64: String,
    pub sampled_frames: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateResponse {
    pub annotator_id: String,
    pub version: String,
    pub kind: AnnotatorKind,
    pub payload: Value,
    #[serde(default)]
    pub confidence: Option<f64>,
}

pub(super) fn call(
    descriptor: &AnnotatorDescriptor,
    input: &AnnotationInput<'_>,
) -> Result<(AnnotationPayload, Option<f64>)> {
    let request = AnnotateRequest {
        clip_id: input.clip_id.clone(),
        kind: descriptor.kind,
        container_b64: base64::engine::general_purpose::STANDARD.encode(input.container),
        sampled_frames: input.sampled_frames.to_vec(),
    };
    let url = format!("{}/annotate", descriptor.endpoint.trim_end_matches('/'));
    let timeout = Duration::from_secs_f64(descriptor.timeout_s);
    let (status, body) = post_json(&url, &canonical::to_string(&request), timeout).map_err(|f| match f {
        HttpFailure::Timeout => Error::AnnotatorTimeout(descriptor.annotator_id.clone()),
        HttpFailure::Transport(message) => {
            Error::AnnotatorUnavailable { annotator_id: descriptor.annotator_id.clone(), message }
        }
    })?;
    if status != 200 {
        return Err(Error::AnnotatorUnavailable {
            annotator_id: descriptor.annotator_id.clone(),
            message: format!("HTTP {status}"),
        });
    }
    parse_response(descriptor, &body)
}

pub(super) fn parse_response(descriptor: &AnnotatorDescriptor, body: &str) -> Result<(AnnotationPayload, Option<f64>)> {
    let protocol =
        |message: String| Error::AnnotatorProtocolError { annotator_id: descriptor.annotator_id.clone(), message };
    let response: AnnotateResponse =
        serde_json::from_str(body).map_err(|e| protocol(format!("malformed response: {e}")))?;
    if response.kind != descriptor.kind {
        return Err(protocol(format!("expected kind {}, got {}", descriptor.kind, response.kind)));
    }
    if response.annotator_id != descriptor.annotator_id {
        return Err(protocol(format!("response claims annotator `{}`", response.annotator_id)));
    }
    if response.version != descriptor.version {
        return Err(protocol(format!(
            "registered version {} but response reports {}",
            descriptor.version, response.version
        )));
    }
    if let Some(c) = response.confidence {
        if !(0.0..=1.0).contains(&c) {
            return Err(protocol(format!("confidence {c} outside [0, 1]")));
        }
    }
    let payload = AnnotationPayload::from_value(response.kind, response.payload).map_err(protocol)?;
    if let AnnotationPayload::Ocr(frames) = &payload {
        if frames.iter().flat_map(|f| &f.boxes).any(|b| !b.is_valid()) {
            return Err(protocol("OCR box outside the unit square".into()));
        }
    }
    Ok((payload, response.confidence))
}
