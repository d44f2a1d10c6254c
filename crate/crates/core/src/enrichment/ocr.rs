//! OCR box aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side of the raster used to measure box unions.
pub const OCR_GRID: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl NormRect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        NormRect { x0, y0, x1, y1 }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.x0)
            && (0.0..=1.0).contains(&self.y0)
            && self.x1 <= 1.0
            && self.y1 <= 1.0
            && self.x1 > self.x0
            && self.y1 > self.y0
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrFrameBoxes {
    pub frame_index: u32,
    pub boxes: Vec<NormRect>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcrAggregate {
    pub ocr_text_area: f64,
    pub ocr_box_count: f64,
}

/// Fraction of 64x64 grid cells whose centre lies inside any box.
pub fn union_fraction(boxes: &[NormRect]) -> f64 {
    if boxes.is_empty() {
        return 0.0;
    }
    let mut covered = 0usize;
    for j in 0..OCR_GRID {
        let cy = (j as f64 + 0.5) / OCR_GRID as f64;
        for i in 0..OCR_GRID {
            let cx = (i as f64 + 0.5) / OCR_GRID as f64;
            if boxes.iter().any(|b| b.contains(cx, cy)) {
                covered += 1;
            }
        }
    }
    covered as f64 / (OCR_GRID * OCR_GRID) as f64
}

/// Frame indices sampled for OCR: one per second, `floor(k * fps)` for
/// `k = 0, 1, ...` while inside the clip.
pub fn sampled_frames(frame_count: u32, fps_num: u32, fps_den: u32) -> Vec<u32> {
    (0u64..)
        .map(|k| k * fps_num as u64 / fps_den as u64)
        .take_while(|&idx| idx < frame_count as u64)
        .map(|idx| idx as u32)
        .collect()
}

pub fn aggregate_ocr(frames_boxes: &[OcrFrameBoxes], sampled_frame_count: usize) -> Result<OcrAggregate> {
    if sampled_frame_count == 0 {
        return Err(Error::InvalidSample("no sampled frames".into()));
    }
    let mut per_frame: BTreeMap<u32, Vec<NormRect>> = BTreeMap::new();
    let mut total_boxes = 0usize;
    for frame in frames_boxes {
        if let Some(bad) = frame.boxes.iter().find(|b| !b.is_valid()) {
            return Err(Error::InvalidSample(format!(
                "box {bad:?} on frame {} is not a normalized rectangle",
                frame.frame_index
            )));
        }
        total_boxes += frame.boxes.len();
        per_frame.entry(frame.frame_index).or_default().extend_from_slice(&frame.boxes);
    }
    if per_frame.len() > sampled_frame_count {
        return Err(Error::InvalidSample(format!(
            "boxes reported on {} frames but only {sampled_frame_count} were sampled",
            per_frame.len()
        )));
    }
    // fold from +0.0: an empty float sum is -0.0, which would leak into JSON.
    let area = per_frame.values().map(|b| union_fraction(b)).fold(0.0, |a, b| a + b);
    Ok(OcrAggregate {
        ocr_text_area: area / sampled_frame_count as f64,
        ocr_box_count: total_boxes as f64 / sampled_frame_count as f64,
    })
}
