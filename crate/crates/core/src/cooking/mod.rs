//! Cooking: turns a [`CookRequest`] into a packaged, replayable manifest.
//!
//! The pipeline is expand → plan → retrieve → synthesize → audit → package.
//! Everything that lands in the manifest is a function of the request, the
//! indexed corpus, the registered annotators and the synonym table, so the
//! same job always yields the same bytes.

pub mod coverage;
pub mod quality;
pub mod query;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use num_rational::BigRational;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::debug;

pub use coverage::{amplify_long_tail, coverage_report, CoverageReport};
pub use quality::{policy_check, policy_filter, quality_score, DropReason, QualityWeights};
pub use query::{expand_query, parse_query, QueryExpander, SynonymTable};
pub use synth::{synthesize_clip, SynthesisConditioning};

use crate::annotation::AnnotationCenter;
use crate::enrichment::{enrich_container, EnrichConfig, EnrichedClip};
use crate::error::{Error, Result};
use crate::index::ClipIndex;
use crate::model::{
    canonical, compute_clip_id, Channel, ClipId, ClipRecord, CookRequest, LanguageFilter, Manifest, ManifestCounts,
    ManifestEntry, Origin, ProvenanceChain, ProvenanceKind, Selection, ShortfallPolicy, Timestamp, MANIFEST_VERSION,
    MIN_CLIP_SECONDS,
};
use crate::store::{write_atomic, Store};
use crate::ENGINE_VERSION;

/// Attempts per synthesized slot before it counts as a shortfall.
pub const MAX_SYNTH_ATTEMPTS: u64 = 10;
/// Seed clips taken from the top of the retrieved ranking.
const MAX_SEED_CLIPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyPlan {
    pub n_retrieve: u32,
    pub n_synthesize: u32,
    pub shortfall_policy: ShortfallPolicy,
}

/// `n_retrieve = ceil(ratio * scale)`, computed exactly on the decimal
/// value of `ratio`: 0.7 × 100 gives 70 and 0.1 × 10 gives 1.
pub fn plan_assembly(scale: u32, retrieval_ratio: f64, shortfall_policy: ShortfallPolicy) -> AssemblyPlan {
    let ratio = crate::model::duration::decimal_value(retrieval_ratio.clamp(0.0, 1.0));
    let n_retrieve =
        (ratio * BigRational::from_integer(scale.into())).ceil().to_integer().to_u32().unwrap_or(scale).min(scale);
    AssemblyPlan { n_retrieve, n_synthesize: scale - n_retrieve, shortfall_policy }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CookPhase {
    Expanding,
    Retrieving,
    Synthesizing,
    Filtering,
    Packaging,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CookProgress {
    pub phase: CookPhase,
    pub progress: f64,
    pub retrieved: u32,
    pub synthesized: u32,
    pub dropped_by_policy: u32,
}

pub struct CookContext<'a> {
    pub index: &'a ClipIndex,
    pub store: &'a Store,
    pub center: &'a AnnotationCenter,
    pub enrich: EnrichConfig,
    pub weights: QualityWeights,
    pub synonyms: &'a SynonymTable,
    pub expander: Option<&'a dyn QueryExpander>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CookOptions {
    /// Retrieval only: no synthesis, shortfalls are truncated.
    pub dry_run: bool,
}

#[derive(Debug, Clone)]
pub struct SynthesizedClip {
    pub bytes: Vec<u8>,
    pub provenance: ProvenanceChain,
    pub enriched: EnrichedClip,
}

#[derive(Debug, Clone)]
pub struct CookOutput {
    pub manifest: Manifest,
    pub plan: AssemblyPlan,
    pub synthesized: Vec<SynthesizedClip>,
}

/// Latest ingest time over the retrievable (non-synthetic) indexed corpus.
/// Used as the manifest timestamp so it changes only with the corpus.
pub fn corpus_watermark(index: &ClipIndex, store: &Store) -> Timestamp {
    index
        .entries()
        .filter(|e| e.origin != Origin::Synthetic)
        .filter_map(|e| store.record(&e.clip_id).map(|r| r.ingest_time))
        .max()
        .unwrap_or_default()
}

fn job_id(request: &CookRequest, watermark: Timestamp, ctx: &CookContext<'_>) -> String {
    let mut h = Sha256::new();
    h.update(canonical::to_string(request));
    h.update(b"\n");
    h.update(watermark.to_string());
    h.update(b"\n");
    h.update(ENGINE_VERSION);
    for d in ctx.center.descriptors() {
        h.update(format!("\n{}={}:{}", d.annotator_id, d.version, d.enabled));
    }
    h.update(b"\n");
    h.update(canonical::to_string(ctx.synonyms));
    format!("cook-{}", &hex::encode(h.finalize())[..16])
}

fn shell_quote(text: &str) -> String {
    format!("'{}'", text.replace('\'', r"'\''"))
}

pub fn replay_command(request: &CookRequest) -> String {
    format!("vdcook cook --request-json {}", shell_quote(&canonical::to_string(request)))
}

fn shortfall(channel: &'static str, requested: usize, available: usize) -> Error {
    Error::ShortfallUnmet { channel, requested, available }
}

struct Picked {
    record: ClipRecord,
    entry: ManifestEntry,
}

pub fn cook(
    ctx: &CookContext<'_>,
    request: &CookRequest,
    options: CookOptions,
    progress: &(dyn Fn(CookProgress) + Sync),
) -> Result<CookOutput> {
    request.validate().map_err(Error::InvalidRequest)?;
    let mut counts = ManifestCounts::default();
    let report = |phase, fraction, counts: &ManifestCounts| {
        progress(CookProgress {
            phase,
            progress: fraction,
            retrieved: counts.retrieved,
            synthesized: counts.synthesized,
            dropped_by_policy: counts.dropped_by_policy,
        })
    };

    report(CookPhase::Expanding, 0.05, &counts);
    let templates = expand_query(&request.query, ctx.synonyms, ctx.expander)?;
    let parsed = parse_query(&request.query)?;
    let mut plan = plan_assembly(request.scale, request.retrieval_ratio, request.shortfall_policy);
    if options.dry_run {
        plan.n_synthesize = 0;
    }

    report(CookPhase::Retrieving, 0.1, &counts);
    let watermark = corpus_watermark(ctx.index, ctx.store);
    let ranked = ctx.index.retrieve(&templates, &request.prefilters, request.source_mode, usize::MAX);
    let mut retrieved: Vec<Picked> = Vec::new();
    for (clip_id, rank_score) in &ranked {
        if retrieved.len() >= plan.n_retrieve as usize {
            break;
        }
        let stored = ctx.store.clip(clip_id).ok_or_else(|| Error::UnknownClip(clip_id.to_string()))?;
        let metadata = ctx.store.metadata(clip_id).ok_or_else(|| Error::UnknownClip(clip_id.to_string()))?;
        match policy_check(&metadata, stored.record.clip_duration(), request, &ctx.weights) {
            Ok(q) => {
                let entry = ManifestEntry {
                    clip_id: clip_id.clone(),
                    container_digest: String::new(),
                    byte_length: 0,
                    duration_s: stored.record.duration_s,
                    metadata,
                    provenance: stored.provenance,
                    selection: Selection { channel: Channel::Retrieved, rank_score: *rank_score, quality_score: q },
                };
                retrieved.push(Picked { record: stored.record, entry });
            }
            Err(reason) => {
                debug!(clip = %clip_id.short(), ?reason, "retrieved clip dropped");
                counts.dropped_by_policy += 1;
            }
        }
    }
    counts.retrieved = retrieved.len() as u32;
    let mut n_synthesize = plan.n_synthesize as usize;
    let deficit = plan.n_retrieve as usize - retrieved.len();
    if deficit > 0 && !options.dry_run {
        match request.shortfall_policy {
            ShortfallPolicy::Fail => return Err(shortfall("retrieved", plan.n_retrieve as usize, retrieved.len())),
            ShortfallPolicy::BackfillSynthesis => n_synthesize += deficit,
            ShortfallPolicy::Truncate => {}
        }
    }
    report(CookPhase::Retrieving, 0.4, &counts);

    report(CookPhase::Synthesizing, 0.4, &counts);
    let base = synthesis_conditioning(ctx, request, &parsed.tags, &retrieved)?;
    let done = AtomicUsize::new(0);
    let slots: Vec<(Option<SynthesizedClip>, u32)> = (0..n_synthesize as u64)
        .into_par_iter()
        .map(|slot| {
            let out = synthesize_slot(ctx, request, &base, slot, watermark);
            let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
            let mut snapshot = counts;
            snapshot.synthesized = finished as u32;
            report(CookPhase::Synthesizing, 0.4 + 0.45 * finished as f64 / n_synthesize as f64, &snapshot);
            out
        })
        .collect::<Result<_>>()?;
    let mut synthesized = Vec::new();
    for (clip, rejected) in slots {
        counts.dropped_by_policy += rejected;
        synthesized.extend(clip);
    }
    if synthesized.len() < n_synthesize && request.shortfall_policy != ShortfallPolicy::Truncate {
        return Err(shortfall("synthesized", n_synthesize, synthesized.len()));
    }
    counts.synthesized = synthesized.len() as u32;

    report(CookPhase::Filtering, 0.9, &counts);
    let mut entries = Vec::with_capacity(retrieved.len() + synthesized.len());
    for mut picked in retrieved {
        let bytes = ctx.store.read_container(&picked.entry.clip_id)?;
        picked.entry.container_digest = compute_clip_id(&bytes).to_string();
        picked.entry.byte_length = bytes.len() as u64;
        debug_assert_eq!(picked.record.clip_id, picked.entry.clip_id);
        entries.push(picked.entry);
    }
    for s in &synthesized {
        let q = policy_check(&s.enriched.metadata, s.enriched.record.clip_duration(), request, &ctx.weights)
            .map_err(|r| Error::AuditFailed(format!("synthesized clip failed {r:?} after gating")))?;
        entries.push(ManifestEntry {
            clip_id: s.enriched.record.clip_id.clone(),
            container_digest: compute_clip_id(&s.bytes).to_string(),
            byte_length: s.bytes.len() as u64,
            duration_s: s.enriched.record.duration_s,
            metadata: s.enriched.metadata.clone(),
            provenance: s.provenance.clone(),
            selection: Selection { channel: Channel::Synthesized, rank_score: 0.0, quality_score: q },
        });
    }
    entries.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));

    report(CookPhase::Packaging, 0.95, &counts);
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        job_id: job_id(request, watermark, ctx),
        request: request.clone(),
        engine_version: ENGINE_VERSION.to_owned(),
        created_time: watermark,
        entries,
        counts,
        replay_command: replay_command(request),
    };
    audit_manifest(&manifest, &ctx.weights)?;
    Ok(CookOutput { manifest, plan, synthesized })
}

fn synthesis_conditioning(
    ctx: &CookContext<'_>,
    request: &CookRequest,
    tags: &[String],
    retrieved: &[Picked],
) -> Result<SynthesisConditioning> {
    let motion_target = if retrieved.is_empty() {
        50.0
    } else {
        let motions: Vec<f64> = retrieved.iter().map(|p| p.entry.metadata.motion_intensity).collect();
        crate::stats::percentiles(&motions, &[50.0])?[0]
    };
    let mut conditioning =
        SynthesisConditioning::new(tags.first().cloned().unwrap_or_else(|| "plain".to_owned()), motion_target);
    conditioning.tags = tags.to_vec();
    let floor = request.prefilters.min_duration_s.max(MIN_CLIP_SECONDS);
    conditioning.duration_s = conditioning.duration_s.max(floor);
    if let Some(max) = request.prefilters.max_duration_s {
        conditioning.duration_s = conditioning.duration_s.min(max).max(MIN_CLIP_SECONDS);
    }
    if let LanguageFilter::Only(languages) = &request.prefilters.languages {
        conditioning.language = languages.iter().next().cloned();
    }
    conditioning.seed_clip_ids = retrieved.iter().take(MAX_SEED_CLIPS).map(|p| p.entry.clip_id.clone()).collect();
    if let Some(first) = conditioning.seed_clip_ids.first() {
        conditioning.keyframe_color = Some(synth::keyframe_color(&ctx.store.read_container(first)?)?);
    }
    Ok(conditioning)
}

/// Generates one slot, retrying with fresh indices until a clip passes
/// enrichment and the policy gate. Returns the clip (if any) and the number
/// of rejected attempts.
fn synthesize_slot(
    ctx: &CookContext<'_>,
    request: &CookRequest,
    conditioning: &SynthesisConditioning,
    slot: u64,
    created_time: Timestamp,
) -> Result<(Option<SynthesizedClip>, u32)> {
    let mut rejected = 0;
    for attempt in 0..MAX_SYNTH_ATTEMPTS {
        let index = slot * MAX_SYNTH_ATTEMPTS + attempt;
        let (bytes, provenance) = synthesize_clip(conditioning, request.seed, index, created_time)?;
        let record = ClipRecord::from_container(&bytes, Origin::Synthetic, created_time)?;
        let mut outcome = enrich_container(&record, &bytes, &provenance.conditioning, ctx.center, &ctx.enrich)?;
        let passes = outcome.clips.len() == 1
            && outcome.clips[0].record.clip_id == record.clip_id
            && policy_check(&outcome.clips[0].metadata, record.clip_duration(), request, &ctx.weights).is_ok();
        if passes {
            let enriched = outcome.clips.pop().expect("one clip");
            return Ok((Some(SynthesizedClip { bytes, provenance, enriched }), rejected));
        }
        rejected += 1;
    }
    Ok((None, rejected))
}

/// Post-packaging audit: every entry must honour the request it claims to
/// answer and carry complete lineage.
pub fn audit_manifest(manifest: &Manifest, weights: &QualityWeights) -> Result<()> {
    let request = &manifest.request;
    let fail = |id: &ClipId, what: &str| Err(Error::AuditFailed(format!("{}: {what}", id.short())));
    let mut seen = BTreeSet::new();
    for pair in manifest.entries.windows(2) {
        if pair[0].clip_id >= pair[1].clip_id {
            return Err(Error::AuditFailed("entries not strictly sorted by clip_id".into()));
        }
    }
    for e in &manifest.entries {
        seen.insert(&e.clip_id);
        if e.container_digest != e.clip_id.as_str() {
            return fail(&e.clip_id, "container digest does not match clip id");
        }
        // Entries carry no frame count; the scene partition must still be
        // well formed up to its own end.
        let scenes_end = e.metadata.scenes.last().map(|s| s[1]).unwrap_or(0);
        if let Err(m) = e.metadata.validate(scenes_end) {
            return fail(&e.clip_id, &m);
        }
        if let Err(m) = e.provenance.validate() {
            return fail(&e.clip_id, &m);
        }
        if e.duration_s < MIN_CLIP_SECONDS && !request.prefilters.allow_short_clips {
            return fail(&e.clip_id, "shorter than two seconds");
        }
        if e.duration_s < request.prefilters.min_duration_s - 1e-9
            || request.prefilters.max_duration_s.is_some_and(|m| e.duration_s > m + 1e-9)
        {
            return fail(&e.clip_id, "duration outside prefilter bounds");
        }
        if !e.metadata.safety_flags.is_disjoint(&request.prefilters.excluded_safety_flags) {
            return fail(&e.clip_id, "excluded safety flag");
        }
        if !request.prefilters.languages.allows(&e.metadata.language) {
            return fail(&e.clip_id, "language not allowed");
        }
        if quality_score(&e.metadata, weights) < request.quality_threshold {
            return fail(&e.clip_id, "below quality threshold");
        }
        let synthetic = e.provenance.kind == ProvenanceKind::Synthetic;
        if synthetic != (e.selection.channel == Channel::Synthesized) {
            return fail(&e.clip_id, "channel disagrees with provenance kind");
        }
        if synthetic && e.provenance.conditioning.is_empty() {
            return fail(&e.clip_id, "synthetic entry without conditioning");
        }
    }
    let c = &manifest.counts;
    if (c.retrieved + c.synthesized) as usize != manifest.entries.len() || seen.len() != manifest.entries.len() {
        return Err(Error::AuditFailed("counts do not match entries".into()));
    }
    Ok(())
}

/// Writes `<out>/<job_id>/manifest.json` and `clips/`. Stored clips are
/// hard-linked when possible.
pub fn write_package(store: &Store, output: &CookOutput, out_root: &Path) -> Result<PathBuf> {
    let dir = out_root.join(&output.manifest.job_id);
    let clips_dir = dir.join("clips");
    fs::create_dir_all(&clips_dir)?;
    let fresh: BTreeMap<&ClipId, &[u8]> =
        output.synthesized.iter().map(|s| (&s.enriched.record.clip_id, s.bytes.as_slice())).collect();
    for entry in &output.manifest.entries {
        let target = clips_dir.join(format!("{}.vdc", entry.clip_id));
        if target.exists() {
            continue;
        }
        match fresh.get(&entry.clip_id) {
            Some(bytes) => write_atomic(&target, bytes)?,
            None => {
                let source = store.container_path(&entry.clip_id);
                if fs::hard_link(&source, &target).is_err() {
                    fs::copy(&source, &target)?;
                }
            }
        }
    }
    write_atomic(&dir.join("manifest.json"), output.manifest.to_canonical_json().as_bytes())?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_examples() {
        let p = |s, r| {
            let plan = plan_assembly(s, r, ShortfallPolicy::Fail);
            (plan.n_retrieve, plan.n_synthesize)
        };
        assert_eq!(p(100, 0.7), (70, 30));
        assert_eq!(p(50, 0.6), (30, 20));
        assert_eq!(p(9, 1.0), (9, 0));
        assert_eq!(p(3, 0.5), (2, 1));
        assert_eq!(p(5, 0.0), (0, 5));
        assert_eq!(p(10, 0.1), (1, 9));
        assert_eq!(p(1000, 0.001), (1, 999));
        assert_eq!(p(3, 1.0 / 3.0), (1, 2));
    }

    #[test]
    fn replay_command_quotes_request() {
        let req = CookRequest::new("it's koi", 2, 0.5);
        let cmd = replay_command(&req);
        assert!(cmd.starts_with("vdcook cook --request-json '{"));
        assert!(cmd.contains(r"it'\''s koi"));
    }
}
