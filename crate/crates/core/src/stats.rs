//! Corpus statistics: nearest-rank percentiles, histograms, the two-sample
//! KS statistic and the corpus summary tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EnrichmentMetadata, ResolutionBucket, Timestamp};

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Index of the nearest-rank `p`-th percentile in a sorted list of `n`:
/// `ceil(p * n / 100)`, clamped to `[1, n]`, minus one.
///
/// `p / 100 * n` would turn 7% of 100 into 7.000000000000001 and so rank 8.
/// Multiplying first and snapping values within a few ulps of an integer
/// keeps decimal percentages exact.
pub fn nearest_rank(p: f64, n: usize) -> usize {
    let x = p * n as f64 / 100.0;
    let nearest = x.round();
    let rank = if (x - nearest).abs() <= 8.0 * f64::EPSILON * nearest.max(1.0) { nearest } else { x.ceil() };
    (rank as usize).clamp(1, n) - 1
}

pub fn percentiles(values: &[f64], ps: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyData);
    }
    let s = sorted(values);
    Ok(ps.iter().map(|&p| s[nearest_rank(p.clamp(0.0, 100.0), s.len())]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// `counts[i]` covers `[edges[i], edges[i + 1])`.
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }
}

pub fn histogram(values: &[f64], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
        return Err(Error::InvalidEdges);
    }
    let mut h = Histogram { edges: edges.to_vec(), counts: vec![0; edges.len() - 1], underflow: 0, overflow: 0 };
    for &v in values {
        if v < edges[0] {
            h.underflow += 1;
        } else if v >= edges[edges.len() - 1] {
            h.overflow += 1;
        } else {
            // First edge strictly greater than v, minus one.
            let i = edges.partition_point(|&e| e <= v) - 1;
            h.counts[i] += 1;
        }
    }
    Ok(h)
}

/// Fraction of a sorted sample that is `<= x`.
fn ecdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&v| v <= x) as f64 / sorted.len() as f64
}

/// Two-sample Kolmogorov–Smirnov statistic over the pooled sample points.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyData);
    }
    let (sa, sb) = (sorted(a), sorted(b));
    Ok(sa.iter().chain(&sb).map(|&x| (ecdf(&sa, x) - ecdf(&sb, x)).abs()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    Full,
    RandomN {
        n: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub clip_count: usize,
    pub caption_words_mean: f64,
    pub caption_words_p10: f64,
    pub caption_words_p50: f64,
    pub caption_words_p90: f64,
    pub total_duration_s: f64,
    pub resolution_bucket_fractions: BTreeMap<String, f64>,
    pub duration_p10: f64,
    pub duration_p50: f64,
    pub duration_p90: f64,
    pub ocr_text_area_mean: f64,
    pub ocr_text_area_median: f64,
    pub ocr_box_count_mean: f64,
    pub motion_intensity_mean: f64,
    pub snapshot_time: Timestamp,
    pub sampling: Sampling,
}

/// One row of summary input: a clip's duration and its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub duration_s: f64,
    pub metadata: EnrichmentMetadata,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |a, b| a + b) / values.len() as f64
}

/// Summarizes `rows` (expected in a stable order, e.g. by clip id), or a
/// seeded random subset of them.
pub fn corpus_summary(rows: &[SummaryRow], sampling: Sampling, snapshot_time: Timestamp) -> Result<CorpusSummary> {
    if rows.is_empty() {
        return Err(Error::EmptyData);
    }
    let picked: Vec<&SummaryRow> = match sampling {
        Sampling::Full => rows.iter().collect(),
        Sampling::RandomN { n, .. } if n >= rows.len() => rows.iter().collect(),
        Sampling::RandomN { n, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = rand::seq::index::sample(&mut rng, rows.len(), n).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| &rows[i]).collect()
        }
    };
    if picked.is_empty() {
        return Err(Error::EmptyData);
    }
    let column = |f: &dyn Fn(&SummaryRow) -> f64| picked.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let words = column(&|r| r.metadata.caption_word_count as f64);
    let durations = column(&|r| r.duration_s);
    let ocr_area = column(&|r| r.metadata.ocr_text_area);
    let word_p = percentiles(&words, &[10.0, 50.0, 90.0])?;
    let dur_p = percentiles(&durations, &[10.0, 50.0, 90.0])?;

    let mut fractions: BTreeMap<String, f64> =
        ResolutionBucket::ALL.iter().map(|b| (b.as_str().to_owned(), 0.0)).collect();
    let mut bucket_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &picked {
        *bucket_counts.entry(r.metadata.resolution_bucket.as_str()).or_default() += 1;
    }
    for (bucket, count) in bucket_counts {
        fractions.insert(bucket.to_owned(), count as f64 / picked.len() as f64);
    }

    Ok(CorpusSummary {
        clip_count: picked.len(),
        caption_words_mean: mean(&words),
        caption_words_p10: word_p[0],
        caption_words_p50: word_p[1],
        caption_words_p90: word_p[2],
        total_duration_s: durations.iter().fold(0.0, |a, b| a + b),
        resolution_bucket_fractions: fractions,
        duration_p10: dur_p[0],
        duration_p50: dur_p[1],
        duration_p90: dur_p[2],
        ocr_text_area_mean: mean(&ocr_area),
        ocr_text_area_median: percentiles(&ocr_area, &[50.0])?[0],
        ocr_box_count_mean: mean(&column(&|r| r.metadata.ocr_box_count)),
        motion_intensity_mean: mean(&column(&|r| r.metadata.motion_intensity)),
        snapshot_time,
        sampling,
    })
}

/// Plain-text rendering: a dataset overview line followed by per-clip
/// metadata statistics.
pub fn render_summary_table(s: &CorpusSummary) -> String {
    let typical =
        s.resolution_bucket_fractions
            .iter()
            .fold(("-", 0.0), |best, (b, &f)| if f > best.1 { (b.as_str(), f) } else { best });
    let sampling = match s.sampling {
        Sampling::Full => "full".to_owned(),
        Sampling::RandomN { n, seed } => format!("random_n (n={n}, seed={seed})"),
    };
    let mut out = String::new();
    let overview = [
        ("Overall scale (clips)", s.clip_count.to_string()),
        ("Avg. caption length (words)", format!("{:.1}", s.caption_words_mean)),
        ("Total duration (s)", format!("{:.1}", s.total_duration_s)),
        ("Typical resolution", typical.0.to_owned()),
    ];
    let width = overview.iter().map(|(h, v)| h.len().max(v.len())).collect::<Vec<_>>();
    for ((h, _), w) in overview.iter().zip(&width) {
        let _ = write!(out, "{h:<w$}  ");
    }
    out.truncate(out.trim_end().len());
    out.push('\n');
    for ((_, v), w) in overview.iter().zip(&width) {
        let _ = write!(out, "{v:<w$}  ");
    }
    out.truncate(out.trim_end().len());
    out.push_str("\n\n");

    let rows = [
        ("Metric", "value".to_owned()),
        ("ocr_text_area", format!("avg:{:.4}, median:{:.4}", s.ocr_text_area_mean, s.ocr_text_area_median)),
        ("avg. motion intensity", format!("{:.1}", s.motion_intensity_mean)),
        ("OCR boxes", format!("{:.2}", s.ocr_box_count_mean)),
        (
            "caption words P10/P50/P90",
            format!("{}/{}/{}", s.caption_words_p10, s.caption_words_p50, s.caption_words_p90),
        ),
        ("duration s P10/P50/P90", format!("{}/{}/{}", s.duration_p10, s.duration_p50, s.duration_p90)),
        ("sampling", sampling),
        ("snapshot", s.snapshot_time.to_string()),
    ];
    let w = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(0);
    for (metric, value) in rows {
        let _ = writeln!(out, "{metric:<w$}  {value}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_examples() {
        assert_eq!(percentiles(&[1.0, 2.0, 3.0, 4.0, 5.0], &[50.0]).unwrap(), [3.0]);
        let ten: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentiles(&ten, &[10.0, 90.0, 0.0, 100.0]).unwrap(), [1.0, 9.0, 1.0, 10.0]);
        assert!(matches!(percentiles(&[], &[50.0]), Err(Error::EmptyData)));
        let hundred: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentiles(&hundred, &[7.0, 29.0, 57.0]).unwrap(), [7.0, 29.0, 57.0]);
    }

    #[test]
    fn histogram_examples() {
        let h = histogram(&[3.0, 10.0, 45.0, 120.0], &[5.0, 60.0]).unwrap();
        assert_eq!((h.underflow, h.counts.clone(), h.overflow), (1, vec![2], 1));
        let h = histogram(&[], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(h.total(), 0);
        let h = histogram(&[1.0], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(h.counts, [0, 1]);
        assert!(matches!(histogram(&[1.0], &[2.0, 1.0]), Err(Error::InvalidEdges)));
        assert!(matches!(histogram(&[1.0], &[2.0]), Err(Error::InvalidEdges)));
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_statistic(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(ks_statistic(&[0.0; 4], &[1.0; 4]).unwrap(), 1.0);
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 4.0, 5.0]).unwrap(), 0.25);
        assert!(ks_statistic(&[], &[1.0]).is_err());
    }
}
