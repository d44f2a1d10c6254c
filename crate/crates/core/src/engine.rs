//! The engine: one store, one annotation center, one in-memory index, and
//! the operations every front end (CLI, HTTP service) calls.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::annotation::{AnnotationCenter, AnnotatorDescriptor};
use crate::cooking::{
    self, amplify_long_tail, coverage_report, write_package, CookContext, CookOptions, CookOutput, CookProgress,
    CoverageReport, QualityWeights, QueryExpander, SynonymTable, SynthesisConditioning,
};
use crate::enrichment::{enrich_container, EnrichConfig, EnrichOutcome};
use crate::error::{Error, Result};
use crate::index::embed::fnv1a64;
use crate::index::ClipIndex;
use crate::ingestion::{ConnectorRegistry, IngestItemResult, Ingestor};
use crate::model::container::decode_clip_container;
use crate::model::{ClipId, ClipStatus, CookRequest, EnrichmentMetadata, Manifest, Timestamp};
use crate::stats::{self, CorpusSummary, Histogram, Sampling, SummaryRow};
use crate::store::{Store, StoredClip};

const ANNOTATORS_FILE: &str = "annotators.json";

#[derive(Debug, Clone, Default)]
pub struct EngineConfig {
    pub enrich: EnrichConfig,
    pub weights: QualityWeights,
    pub synonyms: SynonymTable,
}

/// Counts from one enrichment pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichReport {
    pub processed: usize,
    pub scene_clips: usize,
    pub dropped_short: usize,
    pub with_pending_annotations: usize,
    pub failed: Vec<(ClipId, String)>,
}

#[derive(Debug, Clone)]
pub struct CookResult {
    pub manifest: Manifest,
    pub package_dir: PathBuf,
    pub reinjected: Vec<IngestItemResult>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayOutcome {
    Identical,
    Differs(Vec<String>),
    MissingClips(Vec<ClipId>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplifyResult {
    pub before: CoverageReport,
    pub conditionings: Vec<SynthesisConditioning>,
    pub ingested: Vec<IngestItemResult>,
    pub after: CoverageReport,
}

/// Metadata fields available to the histogram endpoint.
pub const HISTOGRAM_FIELDS: [&str; 5] =
    ["duration_s", "caption_words", "motion_intensity", "ocr_text_area", "ocr_box_count"];

pub struct Engine {
    store: Arc<Store>,
    ingestor: Ingestor,
    center: AnnotationCenter,
    index: RwLock<ClipIndex>,
    config: EngineConfig,
    expander: Option<Box<dyn QueryExpander>>,
    processing: Mutex<()>,
}

impl Engine {
    pub fn open(root: impl AsRef<Path>) -> Result<Engine> {
        Engine::open_with(root, EngineConfig::default())
    }

    pub fn open_with(root: impl AsRef<Path>, config: EngineConfig) -> Result<Engine> {
        let store = Arc::new(Store::open(root)?);
        let center = match store.load_json::<Vec<AnnotatorDescriptor>>(ANNOTATORS_FILE)? {
            Some(descriptors) => AnnotationCenter::new(descriptors),
            None => {
                let center = AnnotationCenter::with_builtin_mocks();
                store.save_json(ANNOTATORS_FILE, &center.descriptors())?;
                center
            }
        };
        let snapshot = store.index_dir().join("snapshot.bin");
        let index = match ClipIndex::load_snapshot(&snapshot, store.metadata_log_len()) {
            Some(index) => index,
            None => rebuild_index(&store)?,
        };
        Ok(Engine {
            ingestor: Ingestor::new(store.clone(), ConnectorRegistry::default())?,
            store,
            center,
            index: RwLock::new(index),
            config,
            expander: None,
            processing: Mutex::new(()),
        })
    }

    pub fn set_query_expander(&mut self, expander: Box<dyn QueryExpander>) {
        self.expander = Some(expander);
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn ingestor(&self) -> &Ingestor {
        &self.ingestor
    }

    pub fn center(&self) -> &AnnotationCenter {
        &self.center
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Read access to the current index snapshot.
    pub fn index(&self) -> RwLockReadGuard<'_, ClipIndex> {
        self.index.read().unwrap()
    }

    pub fn register_annotator(&self, descriptor: AnnotatorDescriptor) -> Result<String> {
        let id = self.center.register(descriptor)?;
        self.store.save_json(ANNOTATORS_FILE, &self.center.descriptors())?;
        Ok(id)
    }

    pub fn annotators(&self) -> Vec<AnnotatorDescriptor> {
        self.center.descriptors()
    }

    /// Enriches every raw clip.
    pub fn enrich_pending(&self) -> Result<EnrichReport> {
        let raw: Vec<ClipId> = self
            .store
            .clips()
            .into_iter()
            .filter(|c| c.record.status == ClipStatus::Raw)
            .map(|c| c.record.clip_id)
            .collect();
        self.enrich_clips(&raw)
    }

    /// Enriches the given raw clips. Work runs in parallel; results are
    /// written in clip-id order.
    pub fn enrich_clips(&self, ids: &[ClipId]) -> Result<EnrichReport> {
        let _guard = self.processing.lock().unwrap();
        let mut ids = ids.to_vec();
        ids.sort();
        ids.dedup();
        let outcomes: Vec<(StoredClip, Result<EnrichOutcome>)> = ids
            .par_iter()
            .filter_map(|id| self.store.clip(id))
            .filter(|c| c.record.status == ClipStatus::Raw)
            .map(|stored| {
                let outcome = self.store.read_container(&stored.record.clip_id).and_then(|bytes| {
                    enrich_container(
                        &stored.record,
                        &bytes,
                        &stored.provenance.conditioning,
                        &self.center,
                        &self.config.enrich,
                    )
                });
                (stored, outcome)
            })
            .collect();

        let mut report = EnrichReport::default();
        for (stored, outcome) in outcomes {
            let parent_id = stored.record.clip_id.clone();
            let outcome = match outcome {
                Ok(o) => o,
                Err(e) => {
                    warn!(clip = %parent_id.short(), error = %e, "enrichment failed");
                    report.failed.push((parent_id, e.to_string()));
                    continue;
                }
            };
            report.processed += 1;
            report.dropped_short += outcome.dropped_short;
            let mut parent_kept = false;
            for child in outcome.clips {
                report.scene_clips += 1;
                if !child.metadata.pending_annotations.is_empty() {
                    report.with_pending_annotations += 1;
                }
                if child.record.clip_id == parent_id {
                    parent_kept = true;
                    self.store.put_metadata(&child.metadata)?;
                    self.store.append_annotations(&child.annotations)?;
                    self.store.update_record(child.record)?;
                } else {
                    let inserted = self.store.insert_clip_if_absent(
                        child.record.clone(),
                        stored.provenance.clone(),
                        &child.bytes,
                    )?;
                    if inserted {
                        self.store.put_metadata(&child.metadata)?;
                        self.store.append_annotations(&child.annotations)?;
                    }
                }
            }
            if !parent_kept {
                // A parent split into scenes keeps its record; one whose
                // every segment was too short is rejected.
                let status = if outcome.dropped_short > 0 && report_children_of(&self.store, &parent_id) == 0 {
                    ClipStatus::Rejected
                } else {
                    ClipStatus::Enriched
                };
                self.store.set_status(&parent_id, status)?;
            }
        }
        info!(
            processed = report.processed,
            scene_clips = report.scene_clips,
            dropped_short = report.dropped_short,
            "enrichment pass done"
        );
        Ok(report)
    }

    /// Adds every enriched clip with metadata to the index and marks it
    /// indexed. Returns the number of clips upserted.
    pub fn index_pending(&self) -> Result<usize> {
        let _guard = self.processing.lock().unwrap();
        let pending: Vec<(StoredClip, EnrichmentMetadata)> = self
            .store
            .clips()
            .into_iter()
            .filter(|c| c.record.status == ClipStatus::Enriched)
            .filter_map(|c| self.store.metadata(&c.record.clip_id).map(|m| (c, m)))
            .collect();
        if pending.is_empty() {
            return Ok(0);
        }
        {
            let mut index = self.index.write().unwrap();
            for (clip, metadata) in &pending {
                index.upsert(&clip.record, metadata)?;
            }
        }
        for (clip, _) in &pending {
            self.store.set_status(&clip.record.clip_id, ClipStatus::Indexed)?;
        }
        self.save_snapshot()?;
        Ok(pending.len())
    }

    pub fn save_snapshot(&self) -> Result<()> {
        let index = self.index.read().unwrap();
        index.save_snapshot(&self.store.index_dir().join("snapshot.bin"), self.store.metadata_log_len())
    }

    /// Enrichment followed by indexing.
    pub fn process_pending(&self) -> Result<(EnrichReport, usize)> {
        let report = self.enrich_pending()?;
        let indexed = self.index_pending()?;
        Ok((report, indexed))
    }

    fn cook_context<'a>(&'a self, index: &'a ClipIndex) -> CookContext<'a> {
        CookContext {
            index,
            store: &self.store,
            center: &self.center,
            enrich: self.config.enrich,
            weights: self.config.weights,
            synonyms: &self.config.synonyms,
            expander: self.expander.as_deref(),
        }
    }

    /// Runs the cook pipeline without side effects.
    pub fn cook_only(
        &self,
        request: &CookRequest,
        options: CookOptions,
        progress: &(dyn Fn(CookProgress) + Sync),
    ) -> Result<CookOutput> {
        let index = self.index.read().unwrap();
        cooking::cook(&self.cook_context(&index), request, options, progress)
    }

    /// Cooks, writes the package under `out_root` (default `<root>/packages`)
    /// and re-injects the synthesized clips.
    pub fn cook(
        &self,
        request: &CookRequest,
        out_root: Option<&Path>,
        progress: &(dyn Fn(CookProgress) + Sync),
    ) -> Result<CookResult> {
        let output = self.cook_only(request, CookOptions::default(), progress)?;
        let out_root = out_root.map(Path::to_path_buf).unwrap_or_else(|| self.store.default_packages_dir());
        let package_dir = write_package(&self.store, &output, &out_root)?;
        let reinjected = self.reinject(&output)?;
        Ok(CookResult { manifest: output.manifest, package_dir, reinjected })
    }

    /// Feeds synthesized clips back through ingestion, enrichment and
    /// indexing. Clips already present are skipped.
    pub fn reinject(&self, output: &CookOutput) -> Result<Vec<IngestItemResult>> {
        let mut results = Vec::new();
        for clip in &output.synthesized {
            results.push(self.ingestor.ingest_synthetic(&clip.bytes, clip.provenance.clone())?);
        }
        let accepted: Vec<ClipId> = results.iter().filter(|r| r.accepted).map(|r| r.clip_id.clone()).collect();
        self.enrich_clips(&accepted)?;
        self.index_pending()?;
        Ok(results)
    }

    /// Re-executes a manifest's request and compares the result byte for
    /// byte.
    pub fn replay(&self, manifest_text: &str) -> Result<ReplayOutcome> {
        let manifest = Manifest::from_json(manifest_text)?;
        let missing: Vec<ClipId> = manifest
            .entries
            .iter()
            .filter(|e| e.selection.channel == crate::model::Channel::Retrieved && !self.store.contains(&e.clip_id))
            .map(|e| e.clip_id.clone())
            .collect();
        if !missing.is_empty() {
            return Ok(ReplayOutcome::MissingClips(missing));
        }
        let regenerated = match self.cook_only(&manifest.request, CookOptions::default(), &|_| {}) {
            Ok(out) => out.manifest,
            Err(e) => return Ok(ReplayOutcome::Differs(vec![format!("cook failed on replay: {e}")])),
        };
        let text = regenerated.to_canonical_json();
        if text == manifest_text.strip_suffix('\n').unwrap_or(manifest_text) {
            return Ok(ReplayOutcome::Identical);
        }
        Ok(ReplayOutcome::Differs(manifest_diff(&manifest, &regenerated)))
    }

    pub fn coverage(&self, tag_universe: &[String], floor: u64) -> Result<CoverageReport> {
        coverage_report(&self.index(), tag_universe, floor)
    }

    /// One long-tail round: synthesize for every deficient tag, re-inject,
    /// and report coverage before and after.
    pub fn amplify(&self, tag_universe: &[String], floor: u64, per_tag_batch: u64, seed: u64) -> Result<AmplifyResult> {
        let before = self.coverage(tag_universe, floor)?;
        let conditionings = amplify_long_tail(&before, per_tag_batch);
        let created = Timestamp::now();
        let mut ingested = Vec::new();
        let mut per_tag_offset: std::collections::BTreeMap<String, u64> = std::collections::BTreeMap::new();
        for conditioning in &conditionings {
            let tag = conditioning.style_label.clone();
            let base = before.per_tag_counts.get(&tag).copied().unwrap_or(0);
            let offset = per_tag_offset.entry(tag.clone()).or_insert(0);
            let index = base + *offset;
            *offset += 1;
            let (bytes, provenance) =
                cooking::synthesize_clip(conditioning, seed ^ fnv1a64(tag.as_bytes()), index, created)?;
            ingested.push(self.ingestor.ingest_synthetic(&bytes, provenance)?);
        }
        let accepted: Vec<ClipId> = ingested.iter().filter(|r| r.accepted).map(|r| r.clip_id.clone()).collect();
        self.enrich_clips(&accepted)?;
        self.index_pending()?;
        let after = self.coverage(tag_universe, floor)?;
        Ok(AmplifyResult { before, conditionings, ingested, after })
    }

    fn summary_rows(&self) -> (Vec<SummaryRow>, Timestamp) {
        let index = self.index();
        let mut latest = Timestamp::default();
        let rows = index
            .entries()
            .filter_map(|e| {
                let clip = self.store.clip(&e.clip_id)?;
                latest = latest.max(clip.record.ingest_time);
                Some(SummaryRow { duration_s: clip.record.duration_s, metadata: self.store.metadata(&e.clip_id)? })
            })
            .collect();
        (rows, latest)
    }

    pub fn summary(&self, sampling: Sampling) -> Result<CorpusSummary> {
        let (rows, snapshot) = self.summary_rows();
        stats::corpus_summary(&rows, sampling, snapshot)
    }

    pub fn histogram(&self, field: &str, edges: &[f64]) -> Result<Histogram> {
        let (rows, _) = self.summary_rows();
        let values: Vec<f64> = match field {
            "duration_s" => rows.iter().map(|r| r.duration_s).collect(),
            "caption_words" => rows.iter().map(|r| r.metadata.caption_word_count as f64).collect(),
            "motion_intensity" => rows.iter().map(|r| r.metadata.motion_intensity).collect(),
            "ocr_text_area" => rows.iter().map(|r| r.metadata.ocr_text_area).collect(),
            "ocr_box_count" => rows.iter().map(|r| r.metadata.ocr_box_count).collect(),
            other => {
                return Err(Error::InvalidRequest(vec![crate::FieldError::new(
                    "field",
                    format!("unknown field `{other}`; expected one of {}", HISTOGRAM_FIELDS.join(", ")),
                )]))
            }
        };
        stats::histogram(&values, edges)
    }

    pub fn clip(&self, clip_id: &ClipId) -> Option<(StoredClip, Option<EnrichmentMetadata>)> {
        self.store.clip(clip_id).map(|c| {
            let meta = self.store.metadata(clip_id);
            (c, meta)
        })
    }

    /// One RGB24 frame of a stored clip: `(width, height, pixels)`.
    pub fn frame(&self, clip_id: &ClipId, index: usize) -> Result<(u32, u32, Vec<u8>)> {
        let bytes = self.store.read_container(clip_id)?;
        let clip = decode_clip_container(&bytes)?;
        let index = index.min(clip.frame_count().saturating_sub(1));
        Ok((clip.width, clip.height, clip.frames[index].clone()))
    }
}

fn report_children_of(store: &Store, parent: &ClipId) -> usize {
    store.clips().iter().filter(|c| c.record.parent_clip_id.as_ref() == Some(parent)).count()
}

fn rebuild_index(store: &Store) -> Result<ClipIndex> {
    let mut index = ClipIndex::new();
    for clip in store.clips() {
        if clip.record.status == ClipStatus::Indexed {
            if let Some(meta) = store.metadata(&clip.record.clip_id) {
                index.upsert(&clip.record, &meta)?;
            }
        }
    }
    Ok(index)
}

/// Human-readable differences between two manifests, entries first.
pub fn manifest_diff(old: &Manifest, new: &Manifest) -> Vec<String> {
    let old_ids: BTreeSet<&ClipId> = old.entries.iter().map(|e| &e.clip_id).collect();
    let new_ids: BTreeSet<&ClipId> = new.entries.iter().map(|e| &e.clip_id).collect();
    let mut diff = Vec::new();
    for id in old_ids.difference(&new_ids) {
        diff.push(format!("- entry {id}"));
    }
    for id in new_ids.difference(&old_ids) {
        diff.push(format!("+ entry {id}"));
    }
    for (a, b) in old.entries.iter().zip(&new.entries) {
        if a.clip_id == b.clip_id && a != b {
            diff.push(format!("~ entry {} changed", a.clip_id));
        }
    }
    if old.counts != new.counts {
        diff.push(format!("~ counts {:?} -> {:?}", old.counts, new.counts));
    }
    for (field, a, b) in [
        ("job_id", &old.job_id, &new.job_id),
        ("engine_version", &old.engine_version, &new.engine_version),
        ("replay_command", &old.replay_command, &new.replay_command),
    ] {
        if a != b {
            diff.push(format!("~ {field} {a} -> {b}"));
        }
    }
    if old.created_time != new.created_time {
        diff.push(format!("~ created_time {} -> {}", old.created_time, new.created_time));
    }
    if diff.is_empty() {
        diff.push("~ serialization differs".to_owned());
    }
    diff
}
