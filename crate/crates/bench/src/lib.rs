//! Inputs shared by the benchmarks.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vdcook_core::index::ClipIndex;
use vdcook_core::model::{
    compute_clip_id, ClipRecord, ClipStatus, EnrichmentMetadata, MotionCategory, Origin, ResolutionBucket, Timestamp,
    METADATA_SCHEMA_VERSION,
};
use vdcook_core::{Engine, Result};

/// An index of `n` clips with random captions drawn from a 300-word
/// vocabulary.
pub fn synthetic_index(n: usize, seed: u64) -> ClipIndex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut index = ClipIndex::new();
    for i in 0..n as u64 {
        let clip_id = compute_clip_id(&i.to_le_bytes());
        let caption: Vec<String> =
            (0..rng.random_range(3..12)).map(|_| format!("w{}", rng.random_range(0..300))).collect();
        let caption = caption.join(" ");
        let record = ClipRecord {
            clip_id: clip_id.clone(),
            width: 640,
            height: 360,
            fps_num: 24,
            fps_den: 1,
            frame_count: 72,
            duration_s: 3.0,
            origin: Origin::Retrieved,
            parent_clip_id: None,
            ingest_time: Timestamp::from_unix(0),
            status: ClipStatus::Indexed,
        };
        let metadata = EnrichmentMetadata {
            clip_id,
            schema_version: METADATA_SCHEMA_VERSION,
            scenes: vec![[0, 72]],
            motion_intensity: 20.0,
            motion_category: MotionCategory::Low,
            ocr_text_area: 0.0,
            ocr_box_count: 0.0,
            caption_word_count: caption.split_whitespace().count() as u32,
            caption,
            tags: BTreeSet::new(),
            language: "en".into(),
            safety_flags: BTreeSet::new(),
            resolution_bucket: ResolutionBucket::Lt480p,
            annotator_versions: Default::default(),
            pending_annotations: Default::default(),
        };
        index.upsert(&record, &metadata).expect("ids match");
    }
    index
}

/// An engine over `count` ingested, enriched and indexed fixture clips.
pub fn fixture_engine(dir: &Path, count: usize) -> Result<Engine> {
    let fixtures = dir.join("fixtures");
    vdcook_core::fixtures::write_fixture_corpus(&fixtures, count, 7)?;
    let engine = Engine::open(dir.join("store"))?;
    engine.ingestor().register_source(vdcook_core::ingestion::SourceDescriptor {
        source_id: "fx".into(),
        connector_kind: "local_dir".into(),
        config: [("root".to_owned(), fixtures.display().to_string())].into(),
        enabled: true,
    })?;
    engine.ingestor().crawl("fx", None)?;
    engine.process_pending()?;
    Ok(engine)
}
