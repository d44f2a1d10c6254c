//! Tag coverage and long-tail amplification planning.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::synth::SynthesisConditioning;
use crate::error::{Error, FieldError, Result};
use crate::index::ClipIndex;

pub const AMPLIFY_MOTION_TARGET: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub per_tag_counts: BTreeMap<String, u64>,
    pub floor: u64,
    /// `(tag, floor - count)` for every tag below the floor, by tag.
    pub deficient_tags: Vec<(String, u64)>,
}

/// Counts indexed clips per tag. With an empty universe every tag present
/// in the index is reported.
pub fn coverage_report(index: &ClipIndex, tag_universe: &[String], floor: u64) -> Result<CoverageReport> {
    if floor < 1 {
        return Err(Error::InvalidRequest(vec![FieldError::new("floor", "must be >= 1")]));
    }
    let mut counts: BTreeMap<String, u64> = tag_universe.iter().map(|t| (t.to_lowercase(), 0)).collect();
    let restricted = !tag_universe.is_empty();
    for entry in index.entries() {
        for tag in &entry.tags {
            if let Some(n) = counts.get_mut(tag) {
                *n += 1;
            } else if !restricted {
                counts.insert(tag.clone(), 1);
            }
        }
    }
    let deficient_tags = counts.iter().filter(|(_, &n)| n < floor).map(|(t, &n)| (t.clone(), floor - n)).collect();
    Ok(CoverageReport { per_tag_counts: counts, floor, deficient_tags })
}

/// One conditioning per missing clip, capped at `per_tag_batch` per tag.
pub fn amplify_long_tail(report: &CoverageReport, per_tag_batch: u64) -> Vec<SynthesisConditioning> {
    report
        .deficient_tags
        .iter()
        .flat_map(|(tag, deficit)| {
            (0..(*deficit).min(per_tag_batch))
                .map(move |_| SynthesisConditioning::new(tag.clone(), AMPLIFY_MOTION_TARGET))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(counts: &[(&str, u64)], floor: u64) -> CoverageReport {
        let per_tag_counts: BTreeMap<String, u64> = counts.iter().map(|(t, n)| (t.to_string(), *n)).collect();
        CoverageReport {
            deficient_tags: per_tag_counts
                .iter()
                .filter(|(_, &n)| n < floor)
                .map(|(t, &n)| (t.clone(), floor - n))
                .collect(),
            per_tag_counts,
            floor,
        }
    }

    #[test]
    fn deficit_arithmetic() {
        let plan = amplify_long_tail(&report(&[("snow", 2), ("city", 9)], 5), 10);
        assert_eq!(plan.len(), 3);
        assert!(plan.iter().all(|c| c.style_label == "snow" && c.motion_target == 50.0));
        assert_eq!(amplify_long_tail(&report(&[("snow", 2)], 5), 2).len(), 2);
        assert!(amplify_long_tail(&report(&[("city", 9)], 5), 10).is_empty());
    }

    #[test]
    fn empty_index_universe() {
        let r = coverage_report(&ClipIndex::new(), &["Snow".to_owned()], 5).unwrap();
        assert_eq!(r.deficient_tags, vec![("snow".to_owned(), 5)]);
        assert!(coverage_report(&ClipIndex::new(), &[], 0).is_err());
    }
}
