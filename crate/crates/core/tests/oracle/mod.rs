//! Reference implementations used as test oracles.
//!
//! Each one is written from the definition, with no code shared with the
//! engine: brute force where the engine is clever, exact integer or
//! rational arithmetic where the engine uses floats.

#![allow(dead_code)]

use std::cmp::Ordering;

use vdcook_core::Clip;

/// Grayscale value: `(R + G + B) / 3` rounded to the nearest integer.
pub fn gray(r: u8, g: u8, b: u8) -> i32 {
    ((r as f64 + g as f64 + b as f64) / 3.0).round() as i32
}

struct Plane {
    w: usize,
    h: usize,
    px: Vec<i32>,
}

impl Plane {
    fn at(&self, x: i64, y: i64) -> i32 {
        let x = x.clamp(0, self.w as i64 - 1) as usize;
        let y = y.clamp(0, self.h as i64 - 1) as usize;
        self.px[y * self.w + x]
    }
}

/// Motion score by exhaustive block matching: every 8x8 block of the
/// decimated frame tries all 81 displacements in a radius of 4 against the
/// previous frame (edges clamped); the best is the lowest SAD, then the
/// smallest magnitude, then the smallest `(dy, dx)`. Score is 25 times the
/// mean magnitude, capped at 100.
pub fn motion_score(clip: &Clip) -> f64 {
    assert!(clip.frames.len() >= 2);
    let (w, h) = (clip.width as usize, clip.height as usize);
    let mut stride = 1;
    while w.max(h) > 128 * stride {
        stride += 1;
    }
    let planes: Vec<Plane> = clip
        .frames
        .iter()
        .map(|f| {
            let mut px = Vec::new();
            let (mut pw, mut ph) = (0, 0);
            for y in (0..h).step_by(stride) {
                ph += 1;
                pw = 0;
                for x in (0..w).step_by(stride) {
                    pw += 1;
                    let p = (y * w + x) * 3;
                    px.push(gray(f[p], f[p + 1], f[p + 2]));
                }
            }
            Plane { w: pw, h: ph, px }
        })
        .collect();
    let (bw, bh) = (planes[0].w / 8, planes[0].h / 8);
    if bw == 0 || bh == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for t in 1..planes.len() {
        let (cur, prev) = (&planes[t], &planes[t - 1]);
        for by in 0..bh {
            for bx in 0..bw {
                let mut candidates = Vec::new();
                for dy in -4i64..=4 {
                    for dx in -4i64..=4 {
                        let mut cost = 0i64;
                        for j in 0..8 {
                            for i in 0..8 {
                                let (x, y) = ((bx * 8 + i) as i64, (by * 8 + j) as i64);
                                cost += (cur.at(x, y) - prev.at(x + dx, y + dy)).abs() as i64;
                            }
                        }
                        candidates.push((cost, dx * dx + dy * dy, dy, dx));
                    }
                }
                let best = candidates.into_iter().min().unwrap();
                sum += (best.1 as f64).sqrt();
            }
        }
    }
    (25.0 * sum / (bw * bh * (planes.len() - 1)) as f64).min(100.0)
}

/// Union area of boxes given in whole 1/64 units `(x0, y0, x1, y1)`, by
/// inclusion-exclusion over all subsets. Exact.
pub fn grid_union_cells(boxes: &[(u32, u32, u32, u32)]) -> i64 {
    let n = boxes.len();
    let mut total = 0i64;
    for mask in 1u32..(1 << n) {
        let (mut x0, mut y0, mut x1, mut y1) = (0u32, 0u32, 64u32, 64u32);
        for (i, b) in boxes.iter().enumerate() {
            if mask & (1 << i) != 0 {
                x0 = x0.max(b.0);
                y0 = y0.max(b.1);
                x1 = x1.min(b.2);
                y1 = y1.min(b.3);
            }
        }
        let area = x1.saturating_sub(x0) as i64 * y1.saturating_sub(y0) as i64;
        if mask.count_ones() % 2 == 1 {
            total += area;
        } else {
            total -= area;
        }
    }
    total
}

/// Continuous union area of normalized boxes by inclusion-exclusion.
pub fn union_area(boxes: &[(f64, f64, f64, f64)]) -> f64 {
    let n = boxes.len();
    let mut total = 0.0;
    for mask in 1u32..(1 << n) {
        let (mut x0, mut y0, mut x1, mut y1) = (0.0f64, 0.0f64, 1.0f64, 1.0f64);
        for (i, b) in boxes.iter().enumerate() {
            if mask & (1 << i) != 0 {
                x0 = x0.max(b.0);
                y0 = y0.max(b.1);
                x1 = x1.min(b.2);
                y1 = y1.min(b.3);
            }
        }
        let area = (x1 - x0).max(0.0) * (y1 - y0).max(0.0);
        total += if mask.count_ones() % 2 == 1 { area } else { -area };
    }
    total
}

/// Signed token counts per hash bucket, before normalization.
pub fn bucket_counts(text: &str) -> Vec<i64> {
    let mut counts = vec![0i64; 256];
    let mut token = String::new();
    let flush = |token: &mut String, counts: &mut Vec<i64>| {
        if token.is_empty() {
            return;
        }
        let mut h: u64 = 14695981039346656037;
        for b in token.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(1099511628211);
        }
        counts[(h % 256) as usize] += if h & (1 << 63) == 0 { 1 } else { -1 };
        token.clear();
    };
    for c in text.chars() {
        for l in c.to_lowercase() {
            if l.is_ascii_lowercase() || l.is_ascii_digit() {
                token.push(l);
            } else {
                flush(&mut token, &mut counts);
            }
        }
    }
    flush(&mut token, &mut counts);
    counts
}

/// A cosine kept as `dot / sqrt(norm_sq)` over the document side; the query
/// norm is common to every candidate and cancels out of comparisons.
#[derive(Debug, Clone, Copy)]
pub struct ExactCosine {
    pub dot: i64,
    pub norm_sq: i64,
}

impl ExactCosine {
    pub fn between(query: &[i64], doc: &[i64]) -> ExactCosine {
        let dot = query.iter().zip(doc).map(|(a, b)| a * b).sum();
        let norm_sq = doc.iter().map(|v| v * v).sum();
        ExactCosine { dot, norm_sq }
    }

    pub fn value(self, query_norm_sq: i64) -> f64 {
        if self.norm_sq == 0 || query_norm_sq == 0 {
            return 0.0;
        }
        self.dot as f64 / ((self.norm_sq as f64).sqrt() * (query_norm_sq as f64).sqrt())
    }

    /// Exact comparison of `dot / sqrt(norm_sq)`; zero vectors score 0.
    pub fn cmp(self, other: ExactCosine) -> Ordering {
        let sign = |c: ExactCosine| if c.norm_sq == 0 { 0 } else { c.dot.signum() };
        let (sa, sb) = (sign(self), sign(other));
        if sa != sb || sa == 0 {
            return sa.cmp(&sb);
        }
        // Same nonzero sign: compare dot^2 / norm_sq, flipped when negative.
        let lhs = (self.dot as i128).pow(2) * other.norm_sq as i128;
        let rhs = (other.dot as i128).pow(2) * self.norm_sq as i128;
        if sa > 0 {
            lhs.cmp(&rhs)
        } else {
            rhs.cmp(&lhs)
        }
    }
}

/// Top `k` documents by exact cosine against `query`, ties by ascending id.
pub fn top_k<Id: Ord + Clone>(query: &str, docs: &[(Id, String)], k: usize) -> Vec<(Id, f64)> {
    let q = bucket_counts(query);
    let q_norm: i64 = q.iter().map(|v| v * v).sum();
    let mut scored: Vec<(Id, ExactCosine)> =
        docs.iter().map(|(id, text)| (id.clone(), ExactCosine::between(&q, &bucket_counts(text)))).collect();
    scored.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored.into_iter().map(|(id, c)| (id, c.value(q_norm))).collect()
}

/// Nearest-rank percentile for `p = hundredths / 100` percent: the smallest
/// sorted value with at least `p`% of the sample at or below it.
pub fn percentile_hundredths(values: &[f64], hundredths: u64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as u64;
    // Smallest rank r with r / n >= hundredths / 10000.
    let rank = (hundredths * n).div_ceil(10_000).clamp(1, n);
    s[(rank - 1) as usize]
}

/// Two-sample KS statistic with exact rational ECDF differences evaluated
/// at every pooled point by linear counting.
pub fn ks(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as i64, b.len() as i64);
    let mut best = 0i64;
    for &x in a.iter().chain(b) {
        let ca = a.iter().filter(|&&v| v <= x).count() as i64;
        let cb = b.iter().filter(|&&v| v <= x).count() as i64;
        best = best.max((ca * nb - cb * na).abs());
    }
    best as f64 / (na * nb) as f64
}
