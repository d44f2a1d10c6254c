//! Deterministic synthetic clips used by tests, benchmarks and the
//! `gen-fixtures` command.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cooking::synth::{render_clip, RenderSpec};
use crate::enrichment::NormRect;
use crate::error::Result;
use crate::model::container::Clip;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gray random texture (levels 96..=160) translating `velocity` pixels per
/// frame to the right with horizontal wraparound, 24 fps.
///
/// The texture contrast keeps frame differences below the default cut
/// threshold, so the clip stays a single scene.
pub fn translating_texture_clip(width: u32, height: u32, frames: usize, velocity: u32, seed: u64) -> Clip {
    let (w, h) = (width as usize, height as usize);
    let mut rng = rng(seed);
    let texture: Vec<u8> = (0..w * h).map(|_| rng.random_range(96..=160)).collect();
    let frames = (0..frames)
        .map(|t| {
            let shift = (t * velocity as usize) % w;
            let mut frame = Vec::with_capacity(w * h * 3);
            for y in 0..h {
                for x in 0..w {
                    let v = texture[y * w + (x + w - shift) % w];
                    frame.extend_from_slice(&[v, v, v]);
                }
            }
            frame
        })
        .collect();
    Clip { width, height, fps_num: 24, fps_den: 1, frames }
}

/// A clip made of flat-ish segments separated by hard cuts; returns the clip
/// and the planted cut indices.
///
/// Segments are at least `min_gap` frames long. Adjacent segments differ in
/// base level by at least 90, while in-segment flicker stays within 4 levels.
pub fn planted_cut_clip(seed: u64, cuts: usize, min_gap: usize) -> (Clip, Vec<usize>) {
    let mut rng = rng(seed);
    let (w, h) = (32usize, 24usize);
    let mut lengths: Vec<usize> = (0..=cuts).map(|_| rng.random_range(min_gap..min_gap + 20)).collect();
    lengths[cuts] = lengths[cuts].max(2);
    let mut frames = Vec::new();
    let mut planted = Vec::new();
    let mut level: i32 = rng.random_range(20..60);
    for (s, &len) in lengths.iter().enumerate() {
        if s > 0 {
            planted.push(frames.len());
            // Jump by at least 90 while staying inside [20, 235].
            level = if level < 128 { level + rng.random_range(90..=100) } else { level - rng.random_range(90..=100) };
        }
        let texture: Vec<i32> = (0..w * h).map(|_| rng.random_range(-15..=15)).collect();
        for _ in 0..len {
            let flicker = rng.random_range(-2..=2);
            let mut frame = Vec::with_capacity(w * h * 3);
            for &t in &texture {
                let v = (level + t + flicker).clamp(0, 255) as u8;
                frame.extend_from_slice(&[v, v, v]);
            }
            frames.push(frame);
        }
    }
    let clip = Clip { width: w as u32, height: h as u32, fps_num: 24, fps_den: 1, frames };
    (clip, planted)
}

/// Brightness ramp of at most 8 levels per frame: gradual, never a cut.
pub fn ramp_clip(seed: u64, frames: usize) -> Clip {
    let mut rng = rng(seed);
    let step: i32 = rng.random_range(1..=8);
    let (w, h) = (24usize, 16usize);
    let texture: Vec<i32> = (0..w * h).map(|_| rng.random_range(-10..=10)).collect();
    let frames = (0..frames)
        .map(|t| {
            // Triangle wave so long ramps stay in range.
            let phase = (t as i32 * step) % 400;
            let level = 20 + if phase < 200 { phase } else { 400 - phase };
            texture
                .iter()
                .flat_map(|&o| {
                    let v = (level + o).clamp(0, 255) as u8;
                    [v, v, v]
                })
                .collect()
        })
        .collect();
    Clip { width: w as u32, height: h as u32, fps_num: 24, fps_den: 1, frames }
}

/// One clip of the fixture corpus, with the parameters used to render it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub name: String,
    pub motion_target: f64,
    pub style_label: String,
    pub duration_s: f64,
    pub text_overlay_boxes: Vec<NormRect>,
    /// Frame index of a planted hard cut, when present.
    pub planted_cut: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct FixtureClip {
    pub spec: FixtureSpec,
    pub bytes: Vec<u8>,
}

pub const FIXTURE_WIDTH: u32 = 64;
pub const FIXTURE_HEIGHT: u32 = 36;
pub const FIXTURE_FPS: u32 = 8;

const STYLES: [&str; 4] = ["plain", "inkwash", "sunset", "night"];
const MOTION_TARGETS: [f64; 6] = [0.0, 12.5, 25.0, 50.0, 75.0, 100.0];

/// The seeded fixture corpus: mixed motion targets, palettes, OCR overlays,
/// a few planted scene cuts and a few clips under two seconds.
pub fn fixture_corpus(count: usize, seed: u64) -> Vec<FixtureClip> {
    let mut rng = rng(seed);
    (0..count)
        .map(|i| {
            let style = STYLES[i % STYLES.len()];
            let motion_target = MOTION_TARGETS[rng.random_range(0..MOTION_TARGETS.len())];
            // Every 25th clip is 1.5 or 1.9 s long and must vanish during enrichment.
            let frames = if i % 25 == 7 {
                if i % 2 == 0 {
                    12
                } else {
                    15
                }
            } else {
                rng.random_range(20..=48)
            };
            let overlays = if i % 3 == 0 {
                let x0 = rng.random_range(0..32) as f64 / 64.0;
                let y0 = rng.random_range(40..56) as f64 / 64.0;
                vec![NormRect::new(x0, y0, x0 + 0.5, y0 + 0.125)]
            } else {
                Vec::new()
            };
            let planted_cut = (i % 20 == 3 && frames >= 40).then_some(frames / 2);
            let spec = RenderSpec {
                width: FIXTURE_WIDTH,
                height: FIXTURE_HEIGHT,
                fps: FIXTURE_FPS,
                frames,
                style_label: style.to_owned(),
                background: None,
                motion_target,
                overlays: overlays.clone(),
                seed: seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                hard_cut_at: planted_cut,
            };
            let clip = render_clip(&spec);
            FixtureClip {
                spec: FixtureSpec {
                    name: format!("fixture_{i:04}"),
                    motion_target,
                    style_label: style.to_owned(),
                    duration_s: frames as f64 / FIXTURE_FPS as f64,
                    text_overlay_boxes: overlays,
                    planted_cut,
                },
                bytes: clip.encode().expect("rendered clip encodes"),
            }
        })
        .collect()
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// Writes `fixture_corpus(count, seed)` into `dir` as `<name>.vdc` files plus
/// a ground-truth JSON listing every spec. Returns the container paths.
pub fn write_fixture_corpus(dir: &Path, count: usize, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let corpus = fixture_corpus(count, seed);
    let mut paths = Vec::with_capacity(corpus.len());
    for clip in &corpus {
        let path = dir.join(format!("{}.vdc", clip.spec.name));
        std::fs::write(&path, &clip.bytes)?;
        paths.push(path);
    }
    let specs: Vec<&FixtureSpec> = corpus.iter().map(|c| &c.spec).collect();
    let mut text = serde_json::to_string_pretty(&specs)?;
    text.push('\n');
    std::fs::write(dir.join(GROUND_TRUTH_FILE), text)?;
    Ok(paths)
}
