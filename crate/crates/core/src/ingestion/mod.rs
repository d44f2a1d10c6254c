//! Source registry, batch ingestion with content-digest dedup, and
//! periodic re-crawl scheduling.

pub mod connectors;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

pub use connectors::{Connector, ConnectorRegistry, FetchedItem, WireItem};

use crate::error::{Error, Result};
use crate::model::{compute_clip_id, ClipId, ClipRecord, ProvenanceChain, ProvenanceKind, Timestamp};
use crate::store::Store;

const SOURCES_FILE: &str = "sources.json";

/// Source id under which re-injected synthetic clips are ingested.
pub const SYNTHETIC_SOURCE_ID: &str = "synthetic";

fn enabled_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub source_id: String,
    pub connector_kind: String,
    #[serde(default)]
    pub config: BTreeMap<String, String>,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlSchedule {
    pub source_id: String,
    pub interval_s: u64,
    pub next_run: Timestamp,
    pub last_run: Option<Timestamp>,
    pub last_new_clips: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct SourcesFile {
    sources: Vec<SourceDescriptor>,
    schedules: Vec<CrawlSchedule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestReason {
    Accepted,
    Duplicate,
    InvalidContainer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestItemResult {
    pub clip_id: ClipId,
    pub accepted: bool,
    pub reason: IngestReason,
    pub locator: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecrawlOutcome {
    pub new_clips: u64,
    pub next_run: Timestamp,
}

pub struct Ingestor {
    store: Arc<Store>,
    connectors: ConnectorRegistry,
    sources: Mutex<SourcesFile>,
}

impl Ingestor {
    pub fn new(store: Arc<Store>, connectors: ConnectorRegistry) -> Result<Ingestor> {
        let sources = store.load_json::<SourcesFile>(SOURCES_FILE)?.unwrap_or_default();
        Ok(Ingestor { store, connectors, sources: Mutex::new(sources) })
    }

    pub fn register_source(&self, descriptor: SourceDescriptor) -> Result<String> {
        if descriptor.source_id.is_empty() || descriptor.source_id == SYNTHETIC_SOURCE_ID {
            return Err(Error::InvalidRequest(vec![crate::FieldError::new(
                "source_id",
                "must be nonempty and not reserved",
            )]));
        }
        if !self.connectors.supports(&descriptor.connector_kind) {
            return Err(Error::UnknownConnector(descriptor.connector_kind));
        }
        // Fail early on missing connector config.
        self.connectors.build(&descriptor)?;
        let mut sources = self.sources.lock().unwrap();
        if sources.sources.iter().any(|s| s.source_id == descriptor.source_id) {
            return Err(Error::SourceExists(descriptor.source_id));
        }
        let id = descriptor.source_id.clone();
        sources.sources.push(descriptor);
        self.store.save_json(SOURCES_FILE, &*sources)?;
        Ok(id)
    }

    /// Registered sources ordered by id.
    pub fn sources(&self) -> Vec<SourceDescriptor> {
        let mut out = self.sources.lock().unwrap().sources.clone();
        out.sort_by(|a, b| a.source_id.cmp(&b.source_id));
        out
    }

    pub fn source(&self, source_id: &str) -> Result<SourceDescriptor> {
        self.sources
            .lock()
            .unwrap()
            .sources
            .iter()
            .find(|s| s.source_id == source_id)
            .cloned()
            .ok_or_else(|| Error::UnknownSource(source_id.to_owned()))
    }

    fn enabled_source(&self, source_id: &str) -> Result<SourceDescriptor> {
        let source = self.source(source_id)?;
        if !source.enabled {
            return Err(Error::SourceDisabled(source_id.to_owned()));
        }
        Ok(source)
    }

    /// Ingests pushed or fetched items. Bad items are rejected one by one;
    /// the rest of the batch proceeds.
    pub fn ingest_batch(
        &self,
        source_id: &str,
        items: Vec<FetchedItem>,
        crawl_job_id: Option<String>,
    ) -> Result<Vec<IngestItemResult>> {
        let source = self.enabled_source(source_id)?;
        let kind = self.connectors.provenance_kind(&source.connector_kind)?;
        let now = Timestamp::now();
        items
            .into_iter()
            .map(|item| {
                let provenance = ProvenanceChain {
                    kind,
                    source_id: source.source_id.clone(),
                    locator: item.locator.clone(),
                    crawl_job_id: crawl_job_id.clone(),
                    license: item.license,
                    seed_clip_ids: Vec::new(),
                    generator_id: None,
                    generator_version: None,
                    conditioning: BTreeMap::new(),
                    created_time: now,
                };
                self.ingest_one(&item.container_bytes, item.locator, provenance, now)
            })
            .collect()
    }

    /// Re-injects a generated clip under the internal synthetic source.
    pub fn ingest_synthetic(&self, bytes: &[u8], provenance: ProvenanceChain) -> Result<IngestItemResult> {
        if provenance.kind != ProvenanceKind::Synthetic {
            return Err(Error::InvalidConditioning("re-injected clips need synthetic provenance".into()));
        }
        provenance.validate().map_err(Error::InvalidConditioning)?;
        let locator = provenance.locator.clone();
        let ingest_time = provenance.created_time;
        let result = self.ingest_one(bytes, locator, provenance, ingest_time)?;
        if result.reason == IngestReason::Duplicate {
            info!(clip = %result.clip_id.short(), "synthetic clip already present");
        }
        Ok(result)
    }

    fn ingest_one(
        &self,
        bytes: &[u8],
        locator: String,
        provenance: ProvenanceChain,
        now: Timestamp,
    ) -> Result<IngestItemResult> {
        let clip_id = compute_clip_id(bytes);
        let record = match ClipRecord::from_container(bytes, provenance.kind.origin(), now) {
            Ok(record) => record,
            Err(e) => {
                warn!(%locator, error = %e, "rejecting item");
                return Ok(IngestItemResult {
                    clip_id,
                    accepted: false,
                    reason: IngestReason::InvalidContainer,
                    locator,
                });
            }
        };
        let accepted = self.store.insert_clip_if_absent(record, provenance, bytes)?;
        Ok(IngestItemResult {
            clip_id,
            accepted,
            reason: if accepted { IngestReason::Accepted } else { IngestReason::Duplicate },
            locator,
        })
    }

    /// One immediate fetch from a source, outside any schedule.
    pub fn crawl(&self, source_id: &str, since: Option<Timestamp>) -> Result<Vec<IngestItemResult>> {
        let source = self.enabled_source(source_id)?;
        let connector = self.connectors.build(&source)?;
        let query = source.config.get("query").map(String::as_str).unwrap_or("");
        let items = connector
            .fetch(query, since)
            .map_err(|message| Error::RecrawlFailed { source_id: source_id.to_owned(), message })?;
        let job = format!("crawl-{source_id}-{}", Timestamp::now().unix());
        self.ingest_batch(source_id, items, Some(job))
    }

    pub fn set_schedule(&self, source_id: &str, interval_s: u64, first_run: Timestamp) -> Result<CrawlSchedule> {
        self.source(source_id)?;
        if interval_s < 1 {
            return Err(Error::InvalidRequest(vec![crate::FieldError::new("interval_s", "must be >= 1")]));
        }
        let schedule = CrawlSchedule {
            source_id: source_id.to_owned(),
            interval_s,
            next_run: first_run,
            last_run: None,
            last_new_clips: 0,
        };
        let mut sources = self.sources.lock().unwrap();
        sources.schedules.retain(|s| s.source_id != source_id);
        sources.schedules.push(schedule.clone());
        sources.schedules.sort_by(|a, b| a.source_id.cmp(&b.source_id));
        self.store.save_json(SOURCES_FILE, &*sources)?;
        Ok(schedule)
    }

    pub fn schedules(&self) -> Vec<CrawlSchedule> {
        self.sources.lock().unwrap().schedules.clone()
    }

    pub fn schedule(&self, source_id: &str) -> Result<CrawlSchedule> {
        self.schedules()
            .into_iter()
            .find(|s| s.source_id == source_id)
            .ok_or_else(|| Error::UnknownSource(source_id.to_owned()))
    }

    /// Runs a due re-crawl. The schedule advances to `now + interval_s`
    /// whether or not the fetch succeeds.
    pub fn run_recrawl(&self, source_id: &str, now: Timestamp) -> Result<RecrawlOutcome> {
        let schedule = self.schedule(source_id)?;
        if now < schedule.next_run {
            return Err(Error::NotDue { source_id: source_id.to_owned(), next_run: schedule.next_run.to_string() });
        }
        let source = self.enabled_source(source_id)?;
        let since = schedule.last_run;
        let fetched = self.connectors.build(&source).and_then(|connector| {
            let query = source.config.get("query").map(String::as_str).unwrap_or("");
            connector
                .fetch(query, since)
                .map_err(|message| Error::RecrawlFailed { source_id: source_id.to_owned(), message })
        });
        let next_run = now.plus_secs(schedule.interval_s);
        let result = fetched.and_then(|items| {
            let job = format!("recrawl-{source_id}-{}", now.unix());
            self.ingest_batch(source_id, items, Some(job))
        });
        let new_clips = match &result {
            Ok(items) => items.iter().filter(|r| r.accepted).count() as u64,
            Err(_) => 0,
        };
        {
            let mut sources = self.sources.lock().unwrap();
            if let Some(s) = sources.schedules.iter_mut().find(|s| s.source_id == source_id) {
                s.last_run = Some(now);
                s.next_run = next_run;
                s.last_new_clips = new_clips;
            }
            self.store.save_json(SOURCES_FILE, &*sources)?;
        }
        match result {
            Ok(_) => Ok(RecrawlOutcome { new_clips, next_run }),
            Err(e) => {
                warn!(source = source_id, error = %e, "re-crawl failed; schedule advanced");
                Err(match e {
                    e @ Error::RecrawlFailed { .. } => e,
                    other => Error::RecrawlFailed { source_id: source_id.to_owned(), message: other.to_string() },
                })
            }
        }
    }

    /// Runs every due schedule in source-id order.
    pub fn run_due(&self, now: Timestamp) -> Vec<(String, Result<RecrawlOutcome>)> {
        self.schedules()
            .into_iter()
            .filter(|s| s.next_run <= now)
            .map(|s| {
                let outcome = self.run_recrawl(&s.source_id, now);
                (s.source_id, outcome)
            })
            .collect()
    }
}
