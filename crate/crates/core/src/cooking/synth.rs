//! Procedural, conditioning-driven clip generator.
//!
//! Frames are a tiled 32×32 random texture over a style background,
//! translating horizontally with wraparound. The velocity is chosen in the
//! downscaled space the motion scorer works in, so a motion target of `m`
//! measures as roughly `m` once enriched.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::enrichment::luma::{downscale_stride, luma};
use crate::enrichment::motion::{MAX_SIDE, SCORE_PER_PIXEL};
use crate::enrichment::NormRect;
use crate::error::{Error, Result};
use crate::model::container::{decode_clip_container, Clip};
use crate::model::{ClipId, ProvenanceChain, ProvenanceKind, Timestamp, KEYFRAME_KEY, MIN_CLIP_SECONDS};

pub const GENERATOR_ID: &str = "procgen";
pub const GENERATOR_VERSION: &str = "1";
pub const SYNTH_WIDTH: u32 = 320;
pub const SYNTH_HEIGHT: u32 = 180;
pub const SYNTH_FPS: u32 = 24;
pub const DEFAULT_SYNTH_DURATION_S: f64 = 2.5;

const PATCH: usize = 32;
const TEXTURE_AMPLITUDE: i32 = 32;
const CUT_LEVEL_JUMP: i32 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConditioning {
    #[serde(default)]
    pub seed_clip_ids: Vec<ClipId>,
    pub style_label: String,
    pub motion_target: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub text_overlay_boxes: Vec<NormRect>,
    #[serde(default)]
    pub keyframe_color: Option<[u8; 3]>,
    /// Extra tags echoed by the tag mock.
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub language: Option<String>,
    #[serde(default)]
    pub safety_flags: Vec<String>,
}

impl SynthesisConditioning {
    pub fn new(style_label: impl Into<String>, motion_target: f64) -> Self {
        SynthesisConditioning {
            seed_clip_ids: Vec::new(),
            style_label: style_label.into(),
            motion_target,
            duration_s: DEFAULT_SYNTH_DURATION_S,
            text_overlay_boxes: Vec::new(),
            keyframe_color: None,
            tags: Vec::new(),
            language: None,
            safety_flags: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.duration_s.is_finite() || self.duration_s < MIN_CLIP_SECONDS {
            return Err(Error::InvalidConditioning(format!("duration_s {} is below 2.0", self.duration_s)));
        }
        if !(0.0..=100.0).contains(&self.motion_target) {
            return Err(Error::InvalidConditioning(format!("motion_target {} outside [0, 100]", self.motion_target)));
        }
        if self.keyframe_color.is_some() && self.seed_clip_ids.is_empty() {
            return Err(Error::InvalidConditioning("keyframe_color needs seed clips".into()));
        }
        if let Some(b) = self.text_overlay_boxes.iter().find(|b| !b.is_valid()) {
            return Err(Error::InvalidConditioning(format!("invalid overlay box {b:?}")));
        }
        Ok(())
    }

    /// The key-value map stored in provenance and read back by the mocks.
    pub fn to_provenance_map(&self, seed: u64, index: u64) -> BTreeMap<String, Value> {
        let mut map = BTreeMap::new();
        map.insert("style_label".to_owned(), json!(self.style_label));
        map.insert("motion_target".to_owned(), json!(self.motion_target));
        map.insert("duration_s".to_owned(), json!(self.duration_s));
        map.insert("text_overlay_boxes".to_owned(), json!(self.text_overlay_boxes));
        map.insert("seed".to_owned(), json!(seed));
        map.insert("index".to_owned(), json!(index));
        if let Some(color) = self.keyframe_color {
            map.insert(KEYFRAME_KEY.to_owned(), json!(color));
        }
        if !self.tags.is_empty() {
            map.insert("tags".to_owned(), json!(self.tags));
        }
        if let Some(language) = &self.language {
            map.insert("language".to_owned(), json!(language));
        }
        if !self.safety_flags.is_empty() {
            map.insert("safety_flags".to_owned(), json!(self.safety_flags));
        }
        map
    }
}

/// Everything the renderer needs; shared by synthesis and the fixture corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderSpec {
    pub width: u32,
    pub height: u32,
    pub fps: u32,
    pub frames: usize,
    pub style_label: String,
    /// Overrides the style palette with a flat color.
    pub background: Option<[u8; 3]>,
    pub motion_target: f64,
    pub overlays: Vec<NormRect>,
    pub seed: u64,
    /// Switches texture and brightness at this frame.
    pub hard_cut_at: Option<usize>,
}

fn palette(style: &str, y: usize, height: usize) -> [i32; 3] {
    match style {
        "inkwash" => {
            let v = 60 + (140 * y / height.max(1)) as i32;
            [v, v, v]
        }
        "sunset" => [200, 120, 60],
        "night" => [40, 50, 100],
        _ => [128, 128, 128],
    }
}

fn texture(rng: &mut ChaCha8Rng) -> Vec<i32> {
    (0..PATCH * PATCH).map(|_| rng.random_range(-TEXTURE_AMPLITUDE..=TEXTURE_AMPLITUDE)).collect()
}

pub fn render_clip(spec: &RenderSpec) -> Clip {
    let (w, h) = (spec.width as usize, spec.height as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let textures = [texture(&mut rng), texture(&mut rng)];
    let stride = downscale_stride(spec.width, spec.height, MAX_SIDE) as i64;
    let velocity = spec.motion_target / SCORE_PER_PIXEL;

    let base: Vec<[i32; 3]> = (0..h)
        .map(|y| match spec.background {
            Some(c) => [c[0] as i32, c[1] as i32, c[2] as i32],
            None => palette(&spec.style_label, y, h),
        })
        .collect();
    let overlay_mask: Vec<bool> = (0..w * h)
        .map(|i| {
            let cx = ((i % w) as f64 + 0.5) / w as f64;
            let cy = ((i / w) as f64 + 0.5) / h as f64;
            spec.overlays.iter().any(|b| cx >= b.x0 && cx < b.x1 && cy >= b.y0 && cy < b.y1)
        })
        .collect();

    let frames = (0..spec.frames)
        .map(|t| {
            let after_cut = spec.hard_cut_at.is_some_and(|c| t >= c);
            let tex = &textures[after_cut as usize];
            // Whole downscaled pixels per frame, scaled back to render pixels.
            let shift = (velocity * t as f64).floor() as i64 * stride;
            let mut frame = Vec::with_capacity(w * h * 3);
            for y in 0..h {
                let mut color = base[y];
                if after_cut {
                    let level = luma(color[0] as u8, color[1] as u8, color[2] as u8) as i32;
                    let jump = if level < 128 { CUT_LEVEL_JUMP } else { -CUT_LEVEL_JUMP };
                    color = color.map(|c| c + jump);
                }
                let overlay_value =
                    if luma(color[0].clamp(0, 255) as u8, color[1].clamp(0, 255) as u8, color[2].clamp(0, 255) as u8)
                        < 128
                    {
                        255
                    } else {
                        0
                    };
                for x in 0..w {
                    if overlay_mask[y * w + x] {
                        frame.extend_from_slice(&[overlay_value; 3]);
                        continue;
                    }
                    let tx = (x as i64 - shift).rem_euclid(PATCH as i64) as usize;
                    let offset = tex[(y % PATCH) * PATCH + tx];
                    for c in color {
                        frame.push((c + offset).clamp(0, 255) as u8);
                    }
                }
            }
            frame
        })
        .collect();
    Clip { width: spec.width, height: spec.height, fps_num: spec.fps, fps_den: 1, frames }
}

/// Mean RGB of a clip's first frame.
pub fn keyframe_color(container: &[u8]) -> Result<[u8; 3]> {
    let clip = decode_clip_container(container)?;
    let frame = &clip.frames[0];
    let pixels = (frame.len() / 3) as u64;
    let mut sums = [0u64; 3];
    for px in frame.chunks_exact(3) {
        for c in 0..3 {
            sums[c] += px[c] as u64;
        }
    }
    Ok(sums.map(|s| ((s + pixels / 2) / pixels) as u8))
}

fn mix_seed(seed: u64, index: u64) -> u64 {
    seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Renders one synthetic clip; identical inputs give identical bytes.
pub fn synthesize_clip(
    conditioning: &SynthesisConditioning,
    seed: u64,
    index: u64,
    created_time: Timestamp,
) -> Result<(Vec<u8>, ProvenanceChain)> {
    conditioning.validate()?;
    let frames = (conditioning.duration_s * SYNTH_FPS as f64).ceil() as usize;
    let spec = RenderSpec {
        width: SYNTH_WIDTH,
        height: SYNTH_HEIGHT,
        fps: SYNTH_FPS,
        frames,
        style_label: conditioning.style_label.clone(),
        background: conditioning.keyframe_color,
        motion_target: conditioning.motion_target,
        overlays: conditioning.text_overlay_boxes.clone(),
        seed: mix_seed(seed, index),
        hard_cut_at: None,
    };
    let bytes = render_clip(&spec).encode()?;
    let provenance = ProvenanceChain {
        kind: ProvenanceKind::Synthetic,
        source_id: crate::ingestion::SYNTHETIC_SOURCE_ID.to_owned(),
        locator: format!("{GENERATOR_ID}://{seed}/{index}"),
        crawl_job_id: None,
        license: "generated".to_owned(),
        seed_clip_ids: conditioning.seed_clip_ids.clone(),
        generator_id: Some(GENERATOR_ID.to_owned()),
        generator_version: Some(GENERATOR_VERSION.to_owned()),
        conditioning: conditioning.to_provenance_map(seed, index),
        created_time,
    };
    Ok((bytes, provenance))
}
