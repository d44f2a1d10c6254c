//! Attribute store plus exact vector index over caption and tag text.

pub mod embed;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use embed::{cosine, embed_text, embed_tokens, tokenize, TextVector, DIMS};

use crate::error::{Error, Result};
use crate::model::duration::ClipDuration;
use crate::model::{ClipId, ClipRecord, EnrichmentMetadata, MotionCategory, Origin, Prefilters, SourceMode};
use crate::store::write_atomic;

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeConstraints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion_category: Option<MotionCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags_any: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_motion: Option<OrderedScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_motion: Option<OrderedScore>,
}

/// A motion bound usable as a hash/eq key (scores are always finite).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrderedScore(pub f64);

impl Eq for OrderedScore {}

impl std::hash::Hash for OrderedScore {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

impl AttributeConstraints {
    pub fn is_empty(&self) -> bool {
        *self == AttributeConstraints::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTemplate {
    pub terms: Vec<String>,
    pub attribute_constraints: AttributeConstraints,
    pub weight: f64,
}

/// Indexed attributes of one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub clip_id: ClipId,
    pub origin: Origin,
    pub frame_count: u32,
    pub fps_num: u32,
    pub fps_den: u32,
    pub motion_intensity: f64,
    pub motion_category: MotionCategory,
    pub tags: BTreeSet<String>,
    pub language: String,
    pub safety_flags: BTreeSet<String>,
    pub vector: TextVector,
}

impl IndexEntry {
    pub fn duration(&self) -> ClipDuration {
        ClipDuration::new(self.frame_count, self.fps_num, self.fps_den)
    }

    fn admits(&self, prefilters: &Prefilters) -> bool {
        prefilters.admits_duration(self.duration())
            && prefilters.languages.allows(&self.language)
            && self.safety_flags.is_disjoint(&prefilters.excluded_safety_flags)
    }

    fn satisfies(&self, c: &AttributeConstraints) -> bool {
        c.motion_category.is_none_or(|m| m == self.motion_category)
            && c.tags_any.as_ref().is_none_or(|tags| !tags.is_disjoint(&self.tags))
            && c.language.as_ref().is_none_or(|l| *l == self.language)
            && c.min_motion.is_none_or(|m| self.motion_intensity >= m.0)
            && c.max_motion.is_none_or(|m| self.motion_intensity <= m.0)
    }
}

/// Text embedded for a clip: caption followed by its tags.
pub fn index_text(metadata: &EnrichmentMetadata) -> String {
    let tags: Vec<&str> = metadata.tags.iter().map(String::as_str).collect();
    format!("{} {}", metadata.caption, tags.join(" "))
}

/// Descending score, then ascending clip id.
fn rank_order(a: &(ClipId, f64), b: &(ClipId, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClipIndex {
    entries: BTreeMap<ClipId, IndexEntry>,
}

impl ClipIndex {
    pub fn new() -> Self {
        ClipIndex::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, clip_id: &ClipId) -> Option<&IndexEntry> {
        self.entries.get(clip_id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &IndexEntry> {
        self.entries.values()
    }

    pub fn ids(&self) -> BTreeSet<ClipId> {
        self.entries.keys().cloned().collect()
    }

    /// Inserts or replaces the entry for a clip.
    pub fn upsert(&mut self, record: &ClipRecord, metadata: &EnrichmentMetadata) -> Result<()> {
        if record.clip_id != metadata.clip_id {
            return Err(Error::UnknownClip(metadata.clip_id.to_string()));
        }
        let entry = IndexEntry {
            clip_id: record.clip_id.clone(),
            origin: record.origin,
            frame_count: record.frame_count,
            fps_num: record.fps_num,
            fps_den: record.fps_den,
            motion_intensity: metadata.motion_intensity,
            motion_category: metadata.motion_category,
            tags: metadata.tags.clone(),
            language: metadata.language.clone(),
            safety_flags: metadata.safety_flags.clone(),
            vector: embed_text(&index_text(metadata)),
        };
        self.entries.insert(entry.clip_id.clone(), entry);
        Ok(())
    }

    /// Clips passing every prefilter and template constraint.
    pub fn query_attributes(&self, prefilters: &Prefilters, constraints: &AttributeConstraints) -> BTreeSet<ClipId> {
        self.entries
            .values()
            .filter(|e| e.admits(prefilters) && e.satisfies(constraints))
            .map(|e| e.clip_id.clone())
            .collect()
    }

    /// Exact top-k by cosine within `candidates`.
    pub fn vector_search(&self, query: &TextVector, k: usize, candidates: &BTreeSet<ClipId>) -> Vec<(ClipId, f64)> {
        let mut scored: Vec<(ClipId, f64)> = candidates
            .iter()
            .filter_map(|id| self.entries.get(id).map(|e| (id.clone(), cosine(query, &e.vector))))
            .collect();
        top_k(&mut scored, k);
        scored
    }

    /// Hybrid retrieval: each template scores its prefiltered candidates and
    /// a clip keeps its best weighted score.
    ///
    /// A template with terms only contributes clips with positive cosine; a
    /// constraint-only template scores every match at its weight.
    pub fn retrieve(
        &self,
        templates: &[RetrievalTemplate],
        prefilters: &Prefilters,
        source_mode: SourceMode,
        k: usize,
    ) -> Vec<(ClipId, f64)> {
        let mut best: BTreeMap<ClipId, f64> = BTreeMap::new();
        for template in templates {
            let mut candidates = self.query_attributes(prefilters, &template.attribute_constraints);
            candidates.retain(|id| source_mode.admits(self.entries[id].origin));
            let hits: Vec<(ClipId, f64)> = if template.terms.is_empty() {
                candidates.into_iter().map(|id| (id, 1.0)).collect()
            } else {
                let query = embed_tokens(&template.terms);
                self.vector_search(&query, candidates.len(), &candidates)
                    .into_iter()
                    .filter(|(_, c)| *c > 0.0)
                    .collect()
            };
            for (id, cos) in hits {
                let score = template.weight * cos;
                let slot = best.entry(id).or_insert(score);
                if score > *slot {
                    *slot = score;
                }
            }
        }
        let mut ranked: Vec<(ClipId, f64)> = best.into_iter().collect();
        top_k(&mut ranked, k);
        ranked
    }

    /// Writes the index with a header recording the metadata log length it
    /// was built from.
    pub fn save_snapshot(&self, path: &Path, metadata_records: u64) -> Result<()> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(SNAPSHOT_MAGIC);
        bytes.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        bytes.extend_from_slice(&metadata_records.to_le_bytes());
        bytes.extend_from_slice(&serde_json::to_vec(self)?);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        write_atomic(path, &bytes)
    }

    /// Loads a snapshot; `None` when absent, stale or of another version.
    pub fn load_snapshot(path: &Path, metadata_records: u64) -> Option<ClipIndex> {
        let bytes = fs::read(path).ok()?;
        if bytes.len() < 16 || &bytes[..4] != SNAPSHOT_MAGIC {
            return None;
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().ok()?);
        let count = u64::from_le_bytes(bytes[8..16].try_into().ok()?);
        if version != SNAPSHOT_VERSION || count != metadata_records {
            return None;
        }
        serde_json::from_slice(&bytes[16..]).ok()
    }
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"VDIX";
const SNAPSHOT_VERSION: u32 = 2;

fn top_k(scored: &mut Vec<(ClipId, f64)>, k: usize) {
    if k < scored.len() {
        scored.select_nth_unstable_by(k, rank_order);
        scored.truncate(k);
    }
    scored.sort_by(rank_order);
}
