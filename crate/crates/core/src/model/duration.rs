//! Exact clip-duration comparisons.
//!
//! A clip lasts `frame_count * fps_den / fps_num` seconds. Thresholds are
//! compared as exact rationals so that a 48-frame clip at 24 fps is exactly
//! two seconds long, never 1.9999999. A threshold means the decimal the user
//! wrote, so 63 frames at 30 fps meet a 2.1 s minimum.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_rational::BigRational;

/// The shortest decimal that round-trips to a finite `x`, as an exact
/// fraction: 0.1 is 1/10, not the binary value just above it.
pub fn decimal_value(x: f64) -> BigRational {
    let text = format!("{x}");
    let (int, frac) = text.split_once('.').unwrap_or((&text, ""));
    let digits: BigInt = format!("{int}{frac}").parse().expect("finite float prints as digits");
    BigRational::new(digits, BigInt::from(10u32).pow(frac.len() as u32))
}

pub fn seconds(frame_count: u32, fps_num: u32, fps_den: u32) -> f64 {
    frame_count as f64 * fps_den as f64 / fps_num as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClipDuration {
    pub frame_count: u32,
    pub fps_num: u32,
    pub fps_den: u32,
}

impl ClipDuration {
    pub fn new(frame_count: u32, fps_num: u32, fps_den: u32) -> Self {
        ClipDuration { frame_count, fps_num, fps_den }
    }

    pub fn as_secs_f64(self) -> f64 {
        seconds(self.frame_count, self.fps_num, self.fps_den)
    }

    /// Exact ordering of this duration against `secs`.
    pub fn cmp_seconds(self, secs: f64) -> Ordering {
        if secs.is_nan() {
            return Ordering::Less;
        }
        if secs.is_infinite() {
            return if secs > 0.0 { Ordering::Less } else { Ordering::Greater };
        }
        let this =
            BigRational::new(BigInt::from(self.frame_count as u64 * self.fps_den as u64), BigInt::from(self.fps_num));
        let other = decimal_value(secs);
        this.cmp(&other)
    }

    pub fn at_least(self, secs: f64) -> bool {
        self.cmp_seconds(secs) != Ordering::Less
    }

    pub fn at_most(self, secs: f64) -> bool {
        self.cmp_seconds(secs) != Ordering::Greater
    }

    /// `frame_count * fps_den >= 2 * fps_num`, the structural minimum.
    pub fn meets_floor(self) -> bool {
        self.frame_count as u64 * self.fps_den as u64 >= 2 * self.fps_num as u64
    }
}
