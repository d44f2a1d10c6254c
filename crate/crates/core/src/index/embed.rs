//! Feature-hashed bag-of-words text vectors.

use serde::{Deserialize, Serialize};

pub const DIMS: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Lowercased maximal `[a-z0-9]+` runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_ascii_lowercase() && !c.is_ascii_digit())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// A 256-dimensional bag-of-words vector.
///
/// Stored as signed per-bucket token counts; [`TextVector::values`] is the
/// unit-length (or all-zero) view. Keeping the integers lets [`cosine`]
/// give bit-identical scores to mathematically equal similarities, so ties
/// rank by clip id rather than by rounding noise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TextVector(Vec<i32>);

impl TextVector {
    pub fn zero() -> Self {
        TextVector(vec![0; DIMS])
    }

    pub fn counts(&self) -> &[i32] {
        &self.0
    }

    fn norm_sq(&self) -> i64 {
        self.0.iter().map(|&c| c as i64 * c as i64).sum()
    }

    /// The L2-normalized vector.
    pub fn values(&self) -> Vec<f64> {
        let norm = (self.norm_sq() as f64).sqrt();
        self.0.iter().map(|&c| if norm > 0.0 { c as f64 / norm } else { 0.0 }).collect()
    }

    pub fn norm(&self) -> f64 {
        self.values().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }
}

pub fn embed_tokens<S: AsRef<str>>(tokens: &[S]) -> TextVector {
    let mut counts = vec![0; DIMS];
    for token in tokens {
        let h = fnv1a64(token.as_ref().as_bytes());
        counts[(h % DIMS as u64) as usize] += if h >> 63 == 0 { 1 } else { -1 };
    }
    TextVector(counts)
}

pub fn embed_text(text: &str) -> TextVector {
    embed_tokens(&tokenize(text))
}

/// Cosine similarity; zero when either side is the zero vector.
///
/// Computed as `sign(dot) * sqrt(dot^2 / (|a|^2 |b|^2))`: the quotient of
/// exact integers is rounded once, so equal ratios give equal scores.
pub fn cosine(a: &TextVector, b: &TextVector) -> f64 {
    let (na, nb) = (a.norm_sq(), b.norm_sq());
    if na == 0 || nb == 0 {
        return 0.0;
    }
    let dot: i64 = a.0.iter().zip(&b.0).map(|(&x, &y)| x as i64 * y as i64).sum();
    let ratio = (dot as i128 * dot as i128) as f64 / (na as i128 * nb as i128) as f64;
    dot.signum() as f64 * ratio.min(1.0).sqrt()
}
