//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion with its
//! runtime, and exits nonzero if any criterion fails.
//!
//! Corpus-level criteria drive the `vdcook` binary end to end. Algorithmic
//! criteria call the library directly and compare against the reference
//! implementations shared with the core property tests.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use vdcook_core::enrichment::ocr::union_fraction;
use vdcook_core::enrichment::{aggregate_ocr, detect_scenes, score_motion, NormRect, OcrFrameBoxes};
use vdcook_core::fixtures::{planted_cut_clip, ramp_clip, translating_texture_clip, write_fixture_corpus};
use vdcook_core::index::{embed_text, AttributeConstraints, ClipIndex, OrderedScore};
use vdcook_core::model::container::read_header;
use vdcook_core::model::{
    compute_clip_id, ClipId, ClipRecord, ClipStatus, EnrichmentMetadata, LanguageFilter, Manifest, MotionCategory,
    Origin, Prefilters, ProvenanceKind, ResolutionBucket, METADATA_SCHEMA_VERSION,
};
use vdcook_core::stats::{histogram, ks_statistic, percentiles};
use vdcook_core::{Channel, Clip, Engine, Timestamp};

type Outcome = Result<String, String>;

/// Fails the enclosing criterion with a formatted message.
macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    }};
}

struct Workspace {
    root: PathBuf,
    fixtures: PathBuf,
    store: PathBuf,
    /// Manifests written during the run, checked for short clips.
    manifests: Vec<PathBuf>,
    first_cook: Duration,
}

fn vdcook(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vdcook"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("VDCOOK_SYNONYMS")
        .output()
        .expect("vdcook binary runs")
}

/// Runs `vdcook` and parses its stdout, requiring exit 0.
fn vdcook_json(store: &Path, args: &[&str]) -> Result<Value, String> {
    let out = vdcook(store, args);
    ensure!(
        out.status.success(),
        "`vdcook {}` exited {:?}: {}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or("")
    );
    serde_json::from_slice(&out.stdout).map_err(|e| format!("`vdcook {}` printed non-JSON: {e}", args.join(" ")))
}

fn read_manifest(path: &Path) -> Result<Manifest, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Manifest::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
}

const COOK: &[&str] =
    &["cook", "--query", "motion scenes", "--scale", "50", "--ratio", "0.6", "--threshold", "0", "--seed", "42"];

fn fixture_cook(ws: &mut Workspace) -> Outcome {
    let fixtures = ws.fixtures.display().to_string();
    let gen = vdcook_json(&ws.store, &["gen-fixtures", "--out", &fixtures, "--count", "200", "--seed", "7"])?;
    ensure!(gen["count"] == 200, "gen-fixtures wrote {} clips", gen["count"]);
    let ingest = vdcook_json(&ws.store, &["ingest", "--dir", &fixtures, "--process"])?;
    ensure!(ingest["accepted"] == 200, "ingest accepted {}", ingest["accepted"]);

    let started = Instant::now();
    let out = ws.root.join("packages-a").display().to_string();
    let cook = vdcook_json(&ws.store, &[COOK, &["--out", &out]].concat())?;
    ws.first_cook = started.elapsed();
    let path = PathBuf::from(cook["manifest_path"].as_str().ok_or("cook printed no manifest_path")?);
    ws.manifests.push(path.clone());
    let manifest = read_manifest(&path)?;

    let retrieved = manifest.entries.iter().filter(|e| e.selection.channel == Channel::Retrieved).count();
    let synthesized = manifest.entries.iter().filter(|e| e.selection.channel == Channel::Synthesized).count();
    ensure!(retrieved == 30 && synthesized == 20, "{retrieved} retrieved + {synthesized} synthesized");
    ensure!(
        manifest.counts.retrieved == 30 && manifest.counts.synthesized == 20,
        "manifest counts {:?}",
        manifest.counts
    );
    let short = manifest.entries.iter().filter(|e| e.duration_s < 2.0).count();
    ensure!(short == 0, "{short} entries under 2.0 s");

    for e in &manifest.entries {
        let p = &e.provenance;
        p.validate().map_err(|m| format!("{}: {m}", e.clip_id))?;
        let frames = e.metadata.scenes.last().map(|s| s[1]).unwrap_or(0);
        e.metadata.validate(frames).map_err(|m| format!("{}: metadata {m}", e.clip_id))?;
        ensure!(e.metadata.clip_id == e.clip_id, "{}: metadata for another clip", e.clip_id);
        match e.selection.channel {
            Channel::Retrieved => ensure!(
                p.kind != ProvenanceKind::Synthetic && !p.locator.is_empty() && !p.license.is_empty(),
                "{}: retrieved entry with provenance {:?}",
                e.clip_id,
                p.kind
            ),
            Channel::Synthesized => ensure!(
                p.kind == ProvenanceKind::Synthetic && p.generator_id.is_some() && !p.conditioning.is_empty(),
                "{}: synthesized entry lacks generator provenance",
                e.clip_id
            ),
        }
    }
    Ok(format!("30 retrieved + 20 synthesized, 0 under 2.0 s, {} provenance chains complete", manifest.entries.len()))
}

fn determinism(ws: &mut Workspace) -> Outcome {
    let first = ws.manifests.first().cloned().ok_or("no manifest from the end-to-end cook")?;
    let out = ws.root.join("packages-b").display().to_string();
    let cook = vdcook_json(&ws.store, &[COOK, &["--out", &out]].concat())?;
    let second = PathBuf::from(cook["manifest_path"].as_str().ok_or("cook printed no manifest_path")?);
    ws.manifests.push(second.clone());
    let a = std::fs::read(&first).map_err(|e| e.to_string())?;
    let b = std::fs::read(&second).map_err(|e| e.to_string())?;
    ensure!(a == b, "second cook differs from the first ({} vs {} bytes)", a.len(), b.len());

    let replay = vdcook(&ws.store, &["replay", &first.display().to_string()]);
    ensure!(
        replay.status.code() == Some(0),
        "replay exited {:?}: {}",
        replay.status.code(),
        String::from_utf8_lossy(&replay.stderr)
    );
    let verdict: Value = serde_json::from_slice(&replay.stdout).map_err(|e| e.to_string())?;
    ensure!(verdict["identical"] == true, "replay reported {verdict}");
    Ok(format!("two cooks byte-identical ({} bytes), replay exit 0", a.len()))
}

fn scene_exactness(_: &mut Workspace) -> Outcome {
    let mut cuts_checked = 0;
    for seed in 0..50u64 {
        let cuts = 1 + (seed % 4) as usize;
        let (clip, planted) = planted_cut_clip(1000 + seed, cuts, 12 + (seed % 7) as usize);
        let found: Vec<usize> = detect_scenes(&clip, 30.0, 12).iter().map(|c| c.frame_index).collect();
        ensure!(found == planted, "clip {seed}: detected {found:?}, planted {planted:?}");
        cuts_checked += planted.len();
    }
    for seed in 0..20u64 {
        let clip = ramp_clip(2000 + seed, 48 + 10 * seed as usize);
        let found = detect_scenes(&clip, 30.0, 12);
        ensure!(found.is_empty(), "ramp {seed}: {} spurious cuts", found.len());
    }
    Ok(format!("50 clips, {cuts_checked} planted cuts matched exactly; 20 ramps with zero cuts"))
}

fn motion_accuracy(_: &mut Workspace) -> Outcome {
    let mut worst_rel = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for v in 0..=4u32 {
        for seed in 0..3u64 {
            let clip = translating_texture_clip(128, 96, 12, v, 300 + seed);
            let score = score_motion(&clip).map_err(|e| e.to_string())?;
            let target = 25.0 * v as f64;
            let tolerance = if v == 0 { 0.5 } else { 0.1 * target };
            ensure!(
                (score - target).abs() <= tolerance,
                "v={v} seed={seed}: score {score}, want {target} ± {tolerance}"
            );
            if v > 0 {
                worst_rel = worst_rel.max((score - target).abs() / target);
            }
            let brute = oracle::motion_score(&clip);
            ensure!((score - brute).abs() <= 1e-9, "v={v} seed={seed}: pipeline {score}, brute force {brute}");
            worst_oracle = worst_oracle.max((score - brute).abs());
        }
    }
    // The matcher must also agree off the happy path: decimated frames and
    // content with no single true displacement.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut extra: Vec<Clip> =
        vec![translating_texture_clip(320, 180, 4, 7, 1), translating_texture_clip(200, 50, 4, 3, 2)];
    extra.push(Clip {
        width: 96,
        height: 64,
        fps_num: 24,
        fps_den: 1,
        frames: (0..4).map(|_| (0..96 * 64 * 3).map(|_| rng.random::<u8>()).collect()).collect(),
    });
    for clip in &extra {
        let score = score_motion(clip).map_err(|e| e.to_string())?;
        let brute = oracle::motion_score(clip);
        ensure!((score - brute).abs() <= 1e-9, "{}x{}: pipeline {score}, brute force {brute}", clip.width, clip.height);
        worst_oracle = worst_oracle.max((score - brute).abs());
    }
    Ok(format!("v in 0..=4 within {:.2}% of 25v; brute-force gap {worst_oracle:.1e} over 18 clips", 100.0 * worst_rel))
}

fn ocr_aggregation(_: &mut Workspace) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    for trial in 0..200 {
        let frames = rng.random_range(1..6);
        let sampled = frames + rng.random_range(0..3);
        let mut boxes = Vec::new();
        let mut cells = 0i64;
        for f in 0..frames {
            let grid: Vec<(u32, u32, u32, u32)> = (0..rng.random_range(0..5))
                .map(|_| {
                    let (x0, y0) = (rng.random_range(0..63), rng.random_range(0..63));
                    (x0, y0, rng.random_range(x0 + 1..=64), rng.random_range(y0 + 1..=64))
                })
                .collect();
            cells += oracle::grid_union_cells(&grid);
            let g = 64.0;
            boxes.push(OcrFrameBoxes {
                frame_index: f as u32,
                boxes: grid
                    .iter()
                    .map(|b| NormRect::new(b.0 as f64 / g, b.1 as f64 / g, b.2 as f64 / g, b.3 as f64 / g))
                    .collect(),
            });
        }
        let agg = aggregate_ocr(&boxes, sampled).map_err(|e| e.to_string())?;
        let want = cells as f64 / (4096 * sampled) as f64;
        ensure!(agg.ocr_text_area == want, "grid trial {trial}: {} vs oracle {want}", agg.ocr_text_area);
    }
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let boxes: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(1..4))
            .map(|_| {
                let (x0, y0) = (rng.random_range(0.0..0.95), rng.random_range(0.0..0.95));
                (x0, y0, rng.random_range(x0 + 0.01..=1.0), rng.random_range(y0 + 0.01..=1.0))
            })
            .collect();
        let rects: Vec<NormRect> = boxes.iter().map(|b| NormRect::new(b.0, b.1, b.2, b.3)).collect();
        let err = (union_fraction(&rects) - oracle::union_area(&boxes)).abs();
        ensure!(err <= 2.0 / 64.0, "random trial {trial}: area error {err}");
        worst = worst.max(err);
    }
    Ok(format!("200 grid-aligned fixtures exact; 1000 random trials, max error {worst:.4} (limit {:.4})", 2.0 / 64.0))
}

fn metadata(id: &ClipId, caption: String, tags: BTreeSet<String>, motion: f64) -> EnrichmentMetadata {
    EnrichmentMetadata {
        clip_id: id.clone(),
        schema_version: METADATA_SCHEMA_VERSION,
        scenes: Vec::new(),
        motion_intensity: motion,
        motion_category: if motion < 33.0 {
            MotionCategory::Low
        } else if motion < 66.0 {
            MotionCategory::Medium
        } else {
            MotionCategory::High
        },
        ocr_text_area: 0.0,
        ocr_box_count: 0.0,
        caption_word_count: caption.split_whitespace().count() as u32,
        caption,
        tags,
        language: "en".to_owned(),
        safety_flags: BTreeSet::new(),
        resolution_bucket: ResolutionBucket::Lt480p,
        annotator_versions: Default::default(),
        pending_annotations: Default::default(),
    }
}

fn record(id: &ClipId, frames: u32, fps: u32) -> ClipRecord {
    ClipRecord {
        clip_id: id.clone(),
        width: 64,
        height: 36,
        fps_num: fps,
        fps_den: 1,
        frame_count: frames,
        duration_s: frames as f64 / fps as f64,
        origin: Origin::Retrieved,
        parent_clip_id: None,
        ingest_time: Timestamp::from_unix(0),
        status: ClipStatus::Indexed,
    }
}

fn retrieval_exactness(_: &mut Workspace) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let vocab: Vec<String> = (0..300).map(|i| format!("w{i}")).collect();
    let tag_pool = ["snow", "city", "koi", "night", "rain"];
    let langs = ["en", "de", "ja"];
    let mut index = ClipIndex::new();
    let mut docs = Vec::new();
    let mut facts = Vec::new();
    for i in 0..10_000u64 {
        let id = compute_clip_id(&i.to_le_bytes());
        let words: Vec<&str> = (0..rng.random_range(0..10)).map(|_| vocab[rng.random_range(0..60)].as_str()).collect();
        let tags: BTreeSet<String> = tag_pool.iter().filter(|_| rng.random_bool(0.2)).map(|t| t.to_string()).collect();
        let mut md = metadata(&id, words.join(" "), tags, rng.random_range(0.0..=100.0));
        md.language = langs[rng.random_range(0..3)].to_owned();
        if rng.random_bool(0.1) {
            md.safety_flags.insert("violence".into());
        }
        // 30 fps: 45..=150 frames is 1.5 s to 5 s.
        let frames = rng.random_range(45..=150);
        let rec = record(&id, frames, 30);
        index.upsert(&rec, &md).map_err(|e| e.to_string())?;
        let tag_text: Vec<&str> = md.tags.iter().map(String::as_str).collect();
        docs.push((id.clone(), format!("{} {}", md.caption, tag_text.join(" "))));
        facts.push((id, md, frames));
    }
    // The two-second example: 57 frames at 30 fps is 1.9 s.
    let short_id = compute_clip_id(b"short");
    index
        .upsert(&record(&short_id, 57, 30), &metadata(&short_id, "w1 w2".into(), BTreeSet::new(), 10.0))
        .map_err(|e| e.to_string())?;
    ensure!(
        !index.query_attributes(&Prefilters::default(), &AttributeConstraints::default()).contains(&short_id),
        "1.9 s clip passes the default prefilters"
    );
    ensure!(
        index.query_attributes(&Prefilters::unrestricted(), &AttributeConstraints::default()).contains(&short_id),
        "1.9 s clip missing when unrestricted"
    );
    docs.push((short_id, "w1 w2 ".into()));

    let all = index.ids();
    let mut compared = 0;
    for q in 0..20 {
        let query: Vec<&str> = (0..1 + q % 4).map(|_| vocab[rng.random_range(0..60)].as_str()).collect();
        let query = query.join(" ") + if q % 5 == 0 { " snow" } else { "" };
        for k in [1, 10, 100] {
            let got = index.vector_search(&embed_text(&query), k, &all);
            let want = oracle::top_k(&query, &docs, k);
            let got_ids: Vec<&ClipId> = got.iter().map(|g| &g.0).collect();
            let want_ids: Vec<&ClipId> = want.iter().map(|w| &w.0).collect();
            ensure!(got_ids == want_ids, "query `{query}` k={k}: ranking differs from brute force");
            for (g, w) in got.iter().zip(&want) {
                ensure!((g.1 - w.1).abs() <= 1e-12, "query `{query}`: score {} vs {}", g.1, w.1);
            }
            compared += 1;
        }
    }

    let mut checks = 0;
    for round in 0..12 {
        let prefilters = Prefilters {
            min_duration_s: [2.0, 2.5, 3.0][round % 3],
            max_duration_s: (round % 2 == 0).then_some(4.0),
            languages: if round % 4 == 1 {
                LanguageFilter::Only(["en".to_owned(), "ja".to_owned()].into())
            } else {
                LanguageFilter::Any
            },
            excluded_safety_flags: if round % 3 == 2 { ["violence".to_owned()].into() } else { BTreeSet::new() },
            allow_short_clips: false,
        };
        let constraints = AttributeConstraints {
            tags_any: (round % 2 == 1).then(|| [tag_pool[round % 5].to_owned()].into()),
            min_motion: (round % 4 == 3).then_some(OrderedScore(40.0)),
            ..AttributeConstraints::default()
        };
        let hits = index.query_attributes(&prefilters, &constraints);
        let complement: BTreeSet<ClipId> = all.difference(&hits).cloned().collect();
        ensure!(
            hits.union(&complement).count() == all.len(),
            "round {round}: result and complement do not cover the index"
        );
        // Durations in thirtieths of a second.
        let min_frames = (prefilters.min_duration_s * 30.0).round() as u32;
        for (id, md, frames) in &facts {
            let admitted = *frames >= min_frames
                && prefilters.max_duration_s.is_none_or(|_| *frames <= 120)
                && prefilters.languages.allows(&md.language)
                && md.safety_flags.is_disjoint(&prefilters.excluded_safety_flags)
                && constraints.tags_any.as_ref().is_none_or(|t| !t.is_disjoint(&md.tags))
                && constraints.min_motion.is_none_or(|m| md.motion_intensity >= m.0);
            ensure!(hits.contains(id) == admitted, "round {round}: {id} admitted={admitted} but query says otherwise");
            ensure!(complement.contains(id) != admitted, "round {round}: {id} misplaced in the complement");
            checks += 1;
        }
    }
    Ok(format!(
        "{} clips, {compared} top-k rankings identical to brute force; {checks} complement checks; 1.9 s clip excluded",
        index.len()
    ))
}

fn short_fixture_ids(fixtures: &Path) -> Result<BTreeSet<ClipId>, String> {
    let mut ids = BTreeSet::new();
    for entry in std::fs::read_dir(fixtures).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_some_and(|e| e == "vdc") {
            let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
            let h = read_header(&bytes).map_err(|e| e.to_string())?;
            if (h.frame_count as u64) * (h.fps_den as u64) < 2 * h.fps_num as u64 {
                ids.insert(compute_clip_id(&bytes));
            }
        }
    }
    Ok(ids)
}

fn stats_oracles(ws: &mut Workspace) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100_000);
    // Coarse values so duplicates are common.
    let values: Vec<f64> = (0..100_000).map(|_| (rng.random_range(-5000.0..5000.0f64) * 4.0).round() / 4.0).collect();
    let mut hundredths: Vec<u64> = vec![0, 1, 100, 500, 1000, 2500, 5000, 7500, 9000, 9500, 9900, 9999, 10_000];
    hundredths.extend((0..50).map(|_| rng.random_range(0..=10_000)));
    let ps: Vec<f64> = hundredths.iter().map(|&h| h as f64 / 100.0).collect();
    let got = percentiles(&values, &ps).map_err(|e| e.to_string())?;
    for (g, &h) in got.iter().zip(&hundredths) {
        let want = oracle::percentile_hundredths(&values, h);
        ensure!(*g == want, "p{}: {g} vs sort oracle {want}", h as f64 / 100.0);
    }

    let (a, b) = ([1.0, 2.0, 3.0, 4.0], [2.0, 3.0, 4.0, 5.0]);
    let d = ks_statistic(&a, &b).map_err(|e| e.to_string())?;
    ensure!(d == 0.25 && oracle::ks(&a, &b) == 0.25, "KS {d}, pooled-ECDF oracle {}", oracle::ks(&a, &b));

    let edges: Vec<f64> = (-4..=4).map(|i| i as f64 * 1000.0).collect();
    let h = histogram(&values, &edges).map_err(|e| e.to_string())?;
    ensure!(h.total() == values.len() as u64, "histogram holds {} of {}", h.total(), values.len());

    // The two-second rule across every package this run produced.
    let short = short_fixture_ids(&ws.fixtures)?;
    ensure!(!short.is_empty(), "fixture corpus has no sub-2 s clips to check");
    let refused =
        vdcook(&ws.store, &["cook", "--query", "motion scenes", "--scale", "5", "--min-duration", "1.9", "--dry-run"]);
    ensure!(refused.status.code() == Some(2), "min-duration 1.9 without override exited {:?}", refused.status.code());
    let lowered = vdcook_json(
        &ws.store,
        &[
            "cook",
            "--query",
            "motion scenes",
            "--scale",
            "150",
            "--shortfall",
            "truncate",
            "--min-duration",
            "1.0",
            "--allow-short-clips",
            "--dry-run",
        ],
    )?;
    let dry: Manifest = serde_json::from_value(lowered).map_err(|e| e.to_string())?;
    let mut entries = dry.entries.len();
    ensure!(dry.entries.iter().all(|e| !short.contains(&e.clip_id)), "a sub-2 s clip reached a dry-run package");
    for path in &ws.manifests {
        let m = read_manifest(path)?;
        entries += m.entries.len();
        ensure!(
            m.entries.iter().all(|e| e.duration_s >= 2.0 && !short.contains(&e.clip_id)),
            "{} holds a sub-2 s clip",
            path.display()
        );
    }
    Ok(format!(
        "{} percentiles equal the sort oracle on 1e5 values; KS = 0.25; histogram conserves 1e5; {} short clips absent from {entries} package entries",
        hundredths.len(),
        short.len()
    ))
}

fn bootstrapping(ws: &mut Workspace) -> Outcome {
    let store = ws.root.join("store-tail");
    let fixtures = ws.root.join("fixtures-tail");
    let dir = fixtures.display().to_string();
    vdcook_json(&store, &["gen-fixtures", "--out", &dir, "--count", "20", "--seed", "5"])?;
    vdcook_json(&store, &["ingest", "--dir", &dir, "--process"])?;
    // Seed the long tail through ordinary cooks: two synthetic snow clips
    // and one city clip, re-injected into the corpus.
    vdcook_json(&store, &["cook", "--query", "tag:snow motion scenes", "--scale", "2", "--ratio", "0", "--seed", "1"])?;
    vdcook_json(&store, &["cook", "--query", "tag:city motion scenes", "--scale", "1", "--ratio", "0", "--seed", "1"])?;
    let before = vdcook_json(&store, &["coverage", "--floor", "5", "--tags", "snow,city"])?;
    ensure!(before["per_tag_counts"]["snow"] == 2, "snow starts at {}", before["per_tag_counts"]["snow"]);

    let snow_before: BTreeSet<ClipId> = {
        let engine = Engine::open(&store).map_err(|e| e.to_string())?;
        let index = engine.index();
        index.entries().filter(|e| e.tags.contains("snow")).map(|e| e.clip_id.clone()).collect()
    };
    let amplified = vdcook_json(&store, &["amplify", "--floor", "5", "--tags", "snow,city", "--seed", "3"])?;
    ensure!(
        amplified["after"]["per_tag_counts"]["snow"] == 5,
        "snow after amplify: {}",
        amplified["after"]["per_tag_counts"]["snow"]
    );

    let engine = Engine::open(&store).map_err(|e| e.to_string())?;
    let index = engine.index();
    let snow: BTreeSet<ClipId> =
        index.entries().filter(|e| e.tags.contains("snow")).map(|e| e.clip_id.clone()).collect();
    ensure!(snow.len() == 5, "{} indexed snow clips", snow.len());
    let new: Vec<&ClipId> = snow.difference(&snow_before).collect();
    ensure!(new.len() == 3, "{} new snow clips", new.len());
    for id in &new {
        let (clip, _) = engine.clip(id).ok_or_else(|| format!("{id} missing from the store"))?;
        ensure!(clip.provenance.kind == ProvenanceKind::Synthetic, "{id} has provenance {:?}", clip.provenance.kind);
    }
    let city = index.entries().filter(|e| e.tags.contains("city")).count();
    ensure!(city >= 1, "city count fell to {city}");
    Ok(format!("snow 2 -> 5 after one round, 3 new clips all synthetic; city 1 -> {city}"))
}

fn ingestion_idempotence(ws: &mut Workspace) -> Outcome {
    let dir = ws.fixtures.display().to_string();
    let again = vdcook_json(&ws.store, &["ingest", "--dir", &dir])?;
    ensure!(again["accepted"] == 0, "re-ingest accepted {}", again["accepted"]);
    ensure!(again["duplicate"] == 200, "re-ingest saw {} duplicates", again["duplicate"]);

    let batch_dir = ws.root.join("batch");
    let paths = write_fixture_corpus(&batch_dir, 5, 99).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(&paths[2]).map_err(|e| e.to_string())?;
    std::fs::write(&paths[2], &bytes[..bytes.len() / 2]).map_err(|e| e.to_string())?;
    let args: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    let mut cmd = vec!["ingest", "--source", "batch", "--upload"];
    cmd.extend(args.iter().map(String::as_str));
    let batch = vdcook_json(&ws.store, &cmd)?;
    ensure!(batch["accepted"] == 4, "batch accepted {}", batch["accepted"]);
    let reasons: Vec<&str> =
        batch["results"].as_array().ok_or("no results")?.iter().map(|r| r["reason"].as_str().unwrap_or("?")).collect();
    ensure!(
        reasons == ["accepted", "accepted", "invalid_container", "accepted", "accepted"],
        "per-item reasons {reasons:?}"
    );
    let repeat = vdcook_json(&ws.store, &cmd)?;
    ensure!(repeat["accepted"] == 0, "repeated batch accepted {}", repeat["accepted"]);
    Ok("200 duplicates re-ingested, 0 accepted; batch of 5 with item 3 truncated: 4 accepted".into())
}

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: fn(&mut Workspace) -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "fixture cook end-to-end", limit: Some(Duration::from_secs(60)), run: fixture_cook },
        Criterion { name: "determinism and replay", limit: Some(Duration::from_secs(90)), run: determinism },
        Criterion { name: "scene detector exactness", limit: Some(Duration::from_secs(30)), run: scene_exactness },
        Criterion { name: "motion score accuracy", limit: Some(Duration::from_secs(60)), run: motion_accuracy },
        Criterion { name: "OCR aggregation", limit: None, run: ocr_aggregation },
        Criterion { name: "retrieval exactness", limit: Some(Duration::from_secs(60)), run: retrieval_exactness },
        Criterion { name: "stats oracles", limit: None, run: stats_oracles },
        Criterion { name: "bootstrapping loop", limit: None, run: bootstrapping },
        Criterion { name: "ingestion idempotence", limit: None, run: ingestion_idempotence },
    ];
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path().to_path_buf();
    let mut ws = Workspace {
        fixtures: root.join("fixtures"),
        store: root.join("store"),
        root,
        manifests: Vec::new(),
        first_cook: Duration::ZERO,
    };

    let mut failed = 0;
    for c in &criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| (c.run)(&mut ws)))
            .unwrap_or_else(|_| Err("panicked".into()));
        let mut elapsed = started.elapsed();
        if c.name == "determinism and replay" {
            // Both cooks count toward this budget.
            elapsed += ws.first_cook;
        }
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => {
                Err(format!("took {:.1}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs()))
            }
            (o, _) => o,
        };
        let limit = c.limit.map(|l| format!("limit {}s", l.as_secs())).unwrap_or_else(|| "no limit".into());
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag}  {:<26} {:>6.1}s ({limit:<9})  {detail}", c.name, elapsed.as_secs_f64());
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
