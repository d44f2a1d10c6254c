//! `vdcook`: every engine capability from the command line.
//!
//! Results go to stdout as canonical JSON, diagnostics to stderr. Exit
//! codes: 0 ok, 1 operational failure, 2 usage or parse error, 3 integrity
//! failure (replay against a store missing referenced clips).

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use vdcook_core::annotation::AnnotatorDescriptor;
use vdcook_core::cooking::{CookOptions, SynonymTable};
use vdcook_core::engine::ReplayOutcome;
use vdcook_core::fixtures::{fixture_corpus, write_fixture_corpus, GROUND_TRUTH_FILE};
use vdcook_core::ingestion::{FetchedItem, IngestItemResult, IngestReason, SourceDescriptor};
use vdcook_core::model::canonical;
use vdcook_core::model::LanguageFilter;
use vdcook_core::stats::{render_summary_table, Sampling};
use vdcook_core::{CookRequest, Engine, EngineConfig, Prefilters, ShortfallPolicy, SourceMode, Timestamp};

const EXIT_USAGE: u8 = 2;
const EXIT_INTEGRITY: u8 = 3;

#[derive(Parser)]
#[command(name = "vdcook", version, about = "Video dataset construction engine")]
struct Cli {
    /// Store root directory.
    #[arg(long, global = true, env = "VDCOOK_STORE", default_value = "vdcook-store")]
    store: PathBuf,
    /// Synonym table (JSON object: term -> list of phrases) used for query expansion.
    #[arg(long, global = true, env = "VDCOOK_SYNONYMS")]
    synonyms: Option<PathBuf>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the seeded synthetic fixture corpus and its ground truth.
    GenFixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Pull clips from a source, a directory or uploaded files.
    Ingest(IngestArgs),
    /// Segment, score and annotate every raw clip.
    Enrich,
    /// Add every enriched clip to the index.
    Index,
    /// Run a cook job and write its package.
    Cook(CookArgs),
    /// Corpus summary or a histogram of one metadata field.
    Stats(StatsArgs),
    /// Per-tag clip counts against a floor.
    Coverage {
        #[arg(long)]
        floor: u64,
        /// Comma-separated tag universe; every indexed tag when omitted.
        #[arg(long, value_delimiter = ',')]
        tags: Vec<String>,
    },
    /// Synthesize and re-inject clips for tags below the floor.
    Amplify {
        #[arg(long)]
        floor: u64,
        #[arg(long, value_delimiter = ',')]
        tags: Vec<String>,
        #[arg(long, default_value_t = 10)]
        batch: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "VDCOOK_LISTEN", default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, env = "VDCOOK_WORKERS", default_value_t = vdcook_service::DEFAULT_WORKERS)]
        workers: usize,
    },
    /// Re-run a manifest's request and compare byte for byte.
    Replay { manifest: PathBuf },
    /// Manage crawl sources.
    #[command(subcommand)]
    Sources(SourcesCommand),
    /// Manage annotators.
    #[command(subcommand)]
    Annotators(AnnotatorsCommand),
}

#[derive(Args)]
struct IngestArgs {
    /// Source id; registered on first use with `--dir` or `--upload`.
    #[arg(long)]
    source: Option<String>,
    /// Directory of `.vdc` containers, crawled through a local_dir source.
    #[arg(long, conflicts_with = "upload")]
    dir: Option<PathBuf>,
    /// Container files submitted through an upload source.
    #[arg(long, num_args = 1..)]
    upload: Vec<PathBuf>,
    #[arg(long, default_value = "unknown")]
    license: String,
    /// Only fetch items newer than this RFC 3339 time.
    #[arg(long)]
    since: Option<String>,
    /// Enrich and index right after ingesting.
    #[arg(long)]
    process: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Crawled,
    Uploaded,
    Hybrid,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShortfallArg {
    Fail,
    BackfillSynthesis,
    Truncate,
}

#[derive(Args)]
struct CookArgs {
    /// Full request as JSON; other request flags are ignored when set.
    #[arg(long)]
    request_json: Option<String>,
    #[arg(long, required_unless_present = "request_json")]
    query: Option<String>,
    #[arg(long, default_value_t = 10)]
    scale: u32,
    /// Retrieval fraction in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
    /// Quality threshold in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "hybrid")]
    source_mode: ModeArg,
    #[arg(long, value_enum, default_value = "fail")]
    shortfall: ShortfallArg,
    #[arg(long)]
    min_duration: Option<f64>,
    #[arg(long)]
    max_duration: Option<f64>,
    /// Needed to set --min-duration below 2 seconds.
    #[arg(long)]
    allow_short_clips: bool,
    /// Comma-separated allowed languages; any language when omitted.
    #[arg(long, value_delimiter = ',')]
    languages: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    exclude_flags: Vec<String>,
    /// Package root; `<store>/packages` by default.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Retrieve only: no synthesis, no package; prints the manifest.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct StatsArgs {
    /// Summarize a seeded random sample of this many clips.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    sample_seed: u64,
    /// Print the aligned plain-text tables instead of JSON.
    #[arg(long)]
    text: bool,
    /// Histogram of a metadata field instead of the summary.
    #[arg(long, requires = "edges")]
    histogram: Option<String>,
    #[arg(long, value_delimiter = ',')]
    edges: Vec<f64>,
}

#[derive(Subcommand)]
enum SourcesCommand {
    List,
    Add {
        #[arg(long)]
        id: String,
        #[arg(long)]
        kind: String,
        /// Connector settings as key=value.
        #[arg(long = "config", value_parser = parse_key_value)]
        config: Vec<(String, String)>,
        #[arg(long)]
        disabled: bool,
    },
    /// Set a periodic re-crawl.
    Schedule {
        #[arg(long)]
        id: String,
        #[arg(long)]
        interval_s: u64,
    },
    /// Run every re-crawl that is due now.
    RunDue,
}

#[derive(Subcommand)]
enum AnnotatorsCommand {
    List,
    /// Register an annotator from a JSON descriptor.
    Add {
        descriptor_json: String,
    },
}

fn parse_key_value(raw: &str) -> Result<(String, String), String> {
    raw.split_once('=')
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .ok_or_else(|| format!("expected key=value, got `{raw}`"))
}

/// Writes one line to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn print_json<T: serde::Serialize>(value: &T) {
    emit(&canonical::to_string(value));
}

fn open_engine(cli: &Cli) -> anyhow::Result<Engine> {
    let mut config = EngineConfig::default();
    if let Some(path) = &cli.synonyms {
        config.synonyms = SynonymTable::load(path).with_context(|| format!("reading synonyms {}", path.display()))?;
    }
    Engine::open_with(&cli.store, config).with_context(|| format!("opening store {}", cli.store.display()))
}

fn ingest_summary(source_id: &str, results: &[IngestItemResult]) -> serde_json::Value {
    let count = |reason: IngestReason| results.iter().filter(|r| r.reason == reason).count();
    json!({
        "source_id": source_id,
        "accepted": count(IngestReason::Accepted),
        "duplicate": count(IngestReason::Duplicate),
        "invalid_container": count(IngestReason::InvalidContainer),
        "results": results,
    })
}

fn ensure_source(engine: &Engine, id: &str, kind: &str, config: BTreeMap<String, String>) -> anyhow::Result<()> {
    if engine.ingestor().source(id).is_err() {
        engine.ingestor().register_source(SourceDescriptor {
            source_id: id.to_owned(),
            connector_kind: kind.to_owned(),
            config,
            enabled: true,
        })?;
    }
    Ok(())
}

fn ingest(engine: &Engine, args: IngestArgs) -> anyhow::Result<serde_json::Value> {
    let since = args.since.as_deref().map(Timestamp::parse).transpose().map_err(anyhow::Error::msg)?;
    let (source_id, results) = if !args.upload.is_empty() {
        let id = args.source.unwrap_or_else(|| "upload".to_owned());
        ensure_source(engine, &id, "upload", BTreeMap::new())?;
        let items = args
            .upload
            .iter()
            .map(|p| {
                Ok(FetchedItem {
                    container_bytes: std::fs::read(p).with_context(|| format!("reading {}", p.display()))?,
                    locator: p.display().to_string(),
                    license: args.license.clone(),
                })
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let results = engine.ingestor().ingest_batch(&id, items, None)?;
        (id, results)
    } else {
        let id = match (&args.source, &args.dir) {
            (Some(id), _) => id.clone(),
            (None, Some(_)) => "local".to_owned(),
            (None, None) => bail!("one of --source, --dir or --upload is required"),
        };
        if let Some(dir) = &args.dir {
            let config = BTreeMap::from([
                ("root".to_owned(), dir.display().to_string()),
                ("license".to_owned(), args.license.clone()),
            ]);
            ensure_source(engine, &id, "local_dir", config)?;
        }
        let results = engine.ingestor().crawl(&id, since)?;
        (id, results)
    };
    let mut out = ingest_summary(&source_id, &results);
    if args.process {
        let (enrich, indexed) = engine.process_pending()?;
        out["enrich"] = serde_json::to_value(enrich)?;
        out["indexed"] = json!(indexed);
    }
    Ok(out)
}

fn cook_request(args: &CookArgs) -> anyhow::Result<CookRequest> {
    if let Some(text) = &args.request_json {
        return serde_json::from_str(text).context("parsing --request-json");
    }
    let mut request = CookRequest::new(args.query.clone().unwrap_or_default(), args.scale, args.ratio);
    request.quality_threshold = args.threshold;
    request.seed = args.seed;
    request.source_mode = match args.source_mode {
        ModeArg::Crawled => SourceMode::Crawled,
        ModeArg::Uploaded => SourceMode::Uploaded,
        ModeArg::Hybrid => SourceMode::Hybrid,
    };
    request.shortfall_policy = match args.shortfall {
        ShortfallArg::Fail => ShortfallPolicy::Fail,
        ShortfallArg::BackfillSynthesis => ShortfallPolicy::BackfillSynthesis,
        ShortfallArg::Truncate => ShortfallPolicy::Truncate,
    };
    let mut prefilters = Prefilters { allow_short_clips: args.allow_short_clips, ..Prefilters::default() };
    if let Some(min) = args.min_duration {
        prefilters.min_duration_s = min;
    }
    prefilters.max_duration_s = args.max_duration;
    if !args.languages.is_empty() {
        prefilters.languages = LanguageFilter::Only(args.languages.iter().cloned().collect());
    }
    prefilters.excluded_safety_flags = args.exclude_flags.iter().cloned().collect::<BTreeSet<_>>();
    request.prefilters = prefilters;
    Ok(request)
}

fn cook(engine: &Engine, args: CookArgs) -> anyhow::Result<()> {
    let request = cook_request(&args)?;
    let progress = |p: vdcook_core::cooking::CookProgress| {
        tracing::info!(phase = ?p.phase, progress = p.progress, retrieved = p.retrieved, synthesized = p.synthesized, "cook");
    };
    if args.dry_run {
        let output = engine.cook_only(&request, CookOptions { dry_run: true }, &progress)?;
        emit(&output.manifest.to_canonical_json());
        return Ok(());
    }
    let result = engine.cook(&request, args.out.as_deref(), &progress)?;
    print_json(&json!({
        "job_id": result.manifest.job_id,
        "package_dir": result.package_dir.display().to_string(),
        "manifest_path": result.package_dir.join("manifest.json").display().to_string(),
        "counts": result.manifest.counts,
        "reinjected": result.reinjected.iter().filter(|r| r.accepted).count(),
    }));
    Ok(())
}

fn replay(engine: &Engine, path: &Path) -> anyhow::Result<ExitCode> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: reading {}: {e}", path.display());
            return Ok(ExitCode::from(EXIT_USAGE));
        }
    };
    let outcome = match engine.replay(&text) {
        Ok(o) => o,
        Err(vdcook_core::Error::Json(e)) => {
            eprintln!("error: manifest does not parse: {e}");
            return Ok(ExitCode::from(EXIT_USAGE));
        }
        Err(e) => return Err(e.into()),
    };
    Ok(match outcome {
        ReplayOutcome::Identical => {
            print_json(&json!({ "identical": true }));
            ExitCode::SUCCESS
        }
        ReplayOutcome::Differs(diff) => {
            for line in &diff {
                eprintln!("{line}");
            }
            print_json(&json!({ "identical": false, "diff": diff }));
            ExitCode::FAILURE
        }
        ReplayOutcome::MissingClips(ids) => {
            for id in &ids {
                eprintln!("missing clip {id}");
            }
            print_json(&json!({ "identical": false, "missing_clips": ids }));
            ExitCode::from(EXIT_INTEGRITY)
        }
    })
}

fn gen_fixtures(out: &Path, count: usize, seed: u64) -> anyhow::Result<()> {
    let paths = write_fixture_corpus(out, count, seed)?;
    let corpus = fixture_corpus(count, seed);
    print_json(&json!({
        "dir": out.display().to_string(),
        "count": paths.len(),
        "seed": seed,
        "ground_truth": out.join(GROUND_TRUTH_FILE).display().to_string(),
        "short_clips": corpus.iter().filter(|c| c.spec.duration_s < 2.0).count(),
        "planted_cuts": corpus.iter().filter(|c| c.spec.planted_cut.is_some()).count(),
        "with_overlays": corpus.iter().filter(|c| !c.spec.text_overlay_boxes.is_empty()).count(),
    }));
    Ok(())
}

fn serve(engine: Engine, listen: SocketAddr, workers: usize) -> anyhow::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let state = vdcook_service::AppState::new(Arc::new(engine), workers)?;
        vdcook_service::serve(state, listen, |addr| print_json(&json!({ "listen": addr.to_string() }))).await
    })?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    if let Command::GenFixtures { out, count, seed } = &cli.command {
        gen_fixtures(out, *count, *seed)?;
        return Ok(ExitCode::SUCCESS);
    }
    let engine = open_engine(&cli)?;
    match cli.command {
        Command::GenFixtures { .. } => unreachable!("handled above"),
        Command::Ingest(args) => print_json(&ingest(&engine, args)?),
        Command::Enrich => print_json(&engine.enrich_pending()?),
        Command::Index => {
            print_json(&json!({ "indexed": engine.index_pending()?, "index_size": engine.index().len() }))
        }
        Command::Cook(args) => cook(&engine, args)?,
        Command::Stats(args) => {
            if let Some(field) = &args.histogram {
                print_json(&json!({ "field": field, "histogram": engine.histogram(field, &args.edges)? }));
            } else {
                let sampling = match args.sample {
                    Some(n) => Sampling::RandomN { n, seed: args.sample_seed },
                    None => Sampling::Full,
                };
                let summary = engine.summary(sampling)?;
                if args.text {
                    emit(render_summary_table(&summary).trim_end());
                } else {
                    print_json(&summary);
                }
            }
        }
        Command::Coverage { floor, tags } => print_json(&engine.coverage(&tags, floor)?),
        Command::Amplify { floor, tags, batch, seed } => print_json(&engine.amplify(&tags, floor, batch, seed)?),
        Command::Serve { listen, workers } => serve(engine, listen, workers)?,
        Command::Replay { manifest } => return replay(&engine, &manifest),
        Command::Sources(cmd) => match cmd {
            SourcesCommand::List => print_json(&json!({
                "sources": engine.ingestor().sources(),
                "schedules": engine.ingestor().schedules(),
            })),
            SourcesCommand::Add { id, kind, config, disabled } => {
                let id = engine.ingestor().register_source(SourceDescriptor {
                    source_id: id,
                    connector_kind: kind,
                    config: config.into_iter().collect(),
                    enabled: !disabled,
                })?;
                print_json(&json!({ "source_id": id }));
            }
            SourcesCommand::Schedule { id, interval_s } => {
                print_json(&engine.ingestor().set_schedule(&id, interval_s, Timestamp::now())?)
            }
            SourcesCommand::RunDue => {
                let outcomes: Vec<_> = engine
                    .ingestor()
                    .run_due(Timestamp::now())
                    .into_iter()
                    .map(|(id, r)| match r {
                        Ok(o) => json!({ "source_id": id, "new_clips": o.new_clips, "next_run": o.next_run }),
                        Err(e) => json!({ "source_id": id, "error": e.to_string() }),
                    })
                    .collect();
                print_json(&outcomes);
            }
        },
        Command::Annotators(cmd) => match cmd {
            AnnotatorsCommand::List => print_json(&engine.annotators()),
            AnnotatorsCommand::Add { descriptor_json } => {
                let descriptor: AnnotatorDescriptor =
                    serde_json::from_str(&descriptor_json).context("parsing descriptor")?;
                print_json(&json!({ "annotator_id": engine.register_annotator(descriptor)? }));
            }
        },
    }
    Ok(ExitCode::SUCCESS)
}

/// Usage-class failures exit 2; everything else exits 1.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<serde_json::Error>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<vdcook_core::Error>() {
        Some(vdcook_core::Error::InvalidRequest(errors)) => {
            for e in errors {
                eprintln!("  {}: {}", e.field, e.message);
            }
            EXIT_USAGE
        }
        Some(vdcook_core::Error::EmptyQuery | vdcook_core::Error::InvalidEdges | vdcook_core::Error::Json(_)) => {
            EXIT_USAGE
        }
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
