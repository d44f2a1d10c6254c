//! Block-matching motion intensity.
//!
//! Luma is decimated so the long side is at most 128 px, then every full
//! 8x8 block of frame `t` is matched against frame `t-1` over all integer
//! displacements with `|dx|, |dy| <= 4`. Reference samples outside the frame
//! are clamped to the nearest edge pixel. The score is `25 * mean |d|`,
//! saturating at 100.

use serde::{Deserialize, Serialize};

use super::luma::{downscale_stride, downscaled_luma, LumaPlane};
use crate::error::{Error, Result};
use crate::model::container::Clip;
use crate::model::MotionCategory;

pub const MAX_SIDE: u32 = 128;
pub const BLOCK: usize = 8;
pub const SEARCH_RADIUS: i32 = 4;
pub const SCORE_PER_PIXEL: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Displacement {
    pub dx: i32,
    pub dy: i32,
}

impl Displacement {
    fn norm_sq(self) -> i32 {
        self.dx * self.dx + self.dy * self.dy
    }

    pub fn magnitude(self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }
}

fn sad(cur: &LumaPlane, prev: &LumaPlane, bx: usize, by: usize, d: Displacement) -> u32 {
    let max_x = prev.width as i32 - 1;
    let max_y = prev.height as i32 - 1;
    let mut total = 0u32;
    for j in 0..BLOCK {
        let y = by + j;
        let ry = (y as i32 + d.dy).clamp(0, max_y) as usize;
        let cur_row = &cur.data[y * cur.width..];
        let ref_row = &prev.data[ry * prev.width..];
        for i in 0..BLOCK {
            let x = bx + i;
            let rx = (x as i32 + d.dx).clamp(0, max_x) as usize;
            total += cur_row[x].abs_diff(ref_row[rx]) as u32;
        }
    }
    total
}

/// Best displacement for the block at `(bx, by)`; ties go to the smaller
/// magnitude, then the smaller `dy`, then the smaller `dx`.
pub fn best_displacement(cur: &LumaPlane, prev: &LumaPlane, bx: usize, by: usize) -> Displacement {
    let mut best = Displacement { dx: 0, dy: 0 };
    let mut best_cost = u32::MAX;
    for dy in -SEARCH_RADIUS..=SEARCH_RADIUS {
        for dx in -SEARCH_RADIUS..=SEARCH_RADIUS {
            let d = Displacement { dx, dy };
            let cost = sad(cur, prev, bx, by, d);
            // Iteration order is ascending (dy, dx), so only magnitude needs
            // an explicit tie check.
            if cost < best_cost || (cost == best_cost && d.norm_sq() < best.norm_sq()) {
                best = d;
                best_cost = cost;
            }
        }
    }
    best
}

/// Mean displacement magnitude over all blocks and consecutive frame pairs.
pub fn mean_displacement(clip: &Clip) -> Result<f64> {
    if clip.frame_count() < 2 {
        return Err(Error::MotionUndefined(clip.frame_count()));
    }
    let stride = downscale_stride(clip.width, clip.height, MAX_SIDE);
    let planes: Vec<LumaPlane> =
        clip.frames.iter().map(|f| downscaled_luma(f, clip.width, clip.height, stride)).collect();
    let blocks_x = planes[0].width / BLOCK;
    let blocks_y = planes[0].height / BLOCK;
    if blocks_x == 0 || blocks_y == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for pair in planes.windows(2) {
        for by in 0..blocks_y {
            for bx in 0..blocks_x {
                total += best_displacement(&pair[1], &pair[0], bx * BLOCK, by * BLOCK).magnitude();
            }
        }
    }
    Ok(total / (blocks_x * blocks_y * (planes.len() - 1)) as f64)
}

pub fn score_motion(clip: &Clip) -> Result<f64> {
    Ok((SCORE_PER_PIXEL * mean_displacement(clip)?).min(100.0))
}

pub fn categorize_motion(motion_intensity: f64) -> Result<MotionCategory> {
    if !(0.0..=100.0).contains(&motion_intensity) {
        return Err(Error::InvalidScore(motion_intensity));
    }
    Ok(if motion_intensity < 33.0 {
        MotionCategory::Low
    } else if motion_intensity < 66.0 {
        MotionCategory::Medium
    } else {
        MotionCategory::High
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::translating_texture_clip;

    #[test]
    fn static_clip_scores_zero() {
        let clip = translating_texture_clip(64, 48, 6, 0, 7);
        assert_eq!(score_motion(&clip).unwrap(), 0.0);
    }

    #[test]
    fn two_pixel_translation_scores_fifty() {
        let clip = translating_texture_clip(128, 64, 6, 2, 11);
        assert_eq!(score_motion(&clip).unwrap(), 50.0);
    }

    #[test]
    fn four_pixel_translation_saturates() {
        let clip = translating_texture_clip(128, 64, 5, 4, 3);
        assert_eq!(score_motion(&clip).unwrap(), 100.0);
    }

    #[test]
    fn single_frame_is_undefined() {
        let clip = translating_texture_clip(16, 16, 1, 0, 1);
        assert!(matches!(score_motion(&clip), Err(Error::MotionUndefined(1))));
    }

    #[test]
    fn tie_break_prefers_zero_on_flat_content() {
        let flat = LumaPlane { width: 16, height: 16, data: vec![50; 256] };
        assert_eq!(best_displacement(&flat, &flat, 8, 8), Displacement { dx: 0, dy: 0 });
    }

    #[test]
    fn categories() {
        assert_eq!(categorize_motion(0.0).unwrap(), MotionCategory::Low);
        assert_eq!(categorize_motion(32.999).unwrap(), MotionCategory::Low);
        assert_eq!(categorize_motion(33.0).unwrap(), MotionCategory::Medium);
        assert_eq!(categorize_motion(66.0).unwrap(), MotionCategory::High);
        assert_eq!(categorize_motion(99.9).unwrap(), MotionCategory::High);
        assert_eq!(categorize_motion(100.0).unwrap(), MotionCategory::High);
        assert!(categorize_motion(-0.1).is_err());
        assert!(categorize_motion(100.1).is_err());
        assert!(categorize_motion(f64::NAN).is_err());
    }
}
