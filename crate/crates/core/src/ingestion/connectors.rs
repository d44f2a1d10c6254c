//! Source connectors. A connector answers `fetch(query, since)` with raw
//! container items; everything after that is shared ingestion code.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::SourceDescriptor;
use crate::error::{Error, Result};
use crate::http::{post_json, HttpFailure};
use crate::model::{ProvenanceKind, Timestamp};

/// One item produced by a connector or submitted for upload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedItem {
    pub container_bytes: Vec<u8>,
    pub locator: String,
    pub license: String,
}

pub trait Connector: Send + Sync {
    fn fetch(&self, query: &str, since: Option<Timestamp>) -> std::result::Result<Vec<FetchedItem>, String>;
}

type Factory = fn(&SourceDescriptor) -> Result<Box<dyn Connector>>;

struct Registered {
    factory: Factory,
    provenance: ProvenanceKind,
}

/// Maps `connector_kind` to an implementation.
pub struct ConnectorRegistry {
    kinds: BTreeMap<String, Registered>,
}

impl Default for ConnectorRegistry {
    fn default() -> Self {
        let mut registry = ConnectorRegistry { kinds: BTreeMap::new() };
        registry.register("local_dir", ProvenanceKind::Crawled, LocalDir::build);
        registry.register("mock_http", ProvenanceKind::Crawled, MockHttp::build);
        registry.register("upload", ProvenanceKind::Uploaded, Upload::build);
        registry
    }
}

impl ConnectorRegistry {
    pub fn register(&mut self, kind: &str, provenance: ProvenanceKind, factory: Factory) {
        self.kinds.insert(kind.to_owned(), Registered { factory, provenance });
    }

    pub fn supports(&self, kind: &str) -> bool {
        self.kinds.contains_key(kind)
    }

    pub fn provenance_kind(&self, kind: &str) -> Result<ProvenanceKind> {
        self.kinds.get(kind).map(|r| r.provenance).ok_or_else(|| Error::UnknownConnector(kind.to_owned()))
    }

    pub fn build(&self, descriptor: &SourceDescriptor) -> Result<Box<dyn Connector>> {
        let registered = self
            .kinds
            .get(&descriptor.connector_kind)
            .ok_or_else(|| Error::UnknownConnector(descriptor.connector_kind.clone()))?;
        (registered.factory)(descriptor)
    }
}

fn config_license(descriptor: &SourceDescriptor) -> String {
    descriptor.config.get("license").cloned().unwrap_or_else(|| "unknown".to_owned())
}

/// Reads every `*.vdc` file under `config.root`, sorted by file name.
struct LocalDir {
    root: PathBuf,
    license: String,
}

impl LocalDir {
    fn build(descriptor: &SourceDescriptor) -> Result<Box<dyn Connector>> {
        let root = descriptor.config.get("root").ok_or_else(|| {
            Error::InvalidRequest(vec![crate::FieldError::new("config.root", "required for local_dir")])
        })?;
        Ok(Box::new(LocalDir { root: PathBuf::from(root), license: config_license(descriptor) }))
    }
}

impl Connector for LocalDir {
    fn fetch(&self, _query: &str, _since: Option<Timestamp>) -> std::result::Result<Vec<FetchedItem>, String> {
        let entries = fs::read_dir(&self.root).map_err(|e| format!("{}: {e}", self.root.display()))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "vdc"))
            .collect();
        paths.sort();
        paths
            .into_iter()
            .map(|path| {
                let bytes = fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                Ok(FetchedItem {
                    container_bytes: bytes,
                    locator: path.display().to_string(),
                    license: self.license.clone(),
                })
            })
            .collect()
    }
}

/// Wire shape of one item returned by an HTTP connector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireItem {
    /// Base64 of the container bytes.
    pub container_bytes: String,
    pub locator: String,
    #[serde(default = "unknown_license")]
    pub license: String,
}

fn unknown_license() -> String {
    "unknown".to_owned()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum WireResponse {
    List(Vec<WireItem>),
    Wrapped { items: Vec<WireItem> },
}

/// `POST {endpoint}/fetch` with `{query, since}`.
struct MockHttp {
    endpoint: String,
    timeout: Duration,
}

impl MockHttp {
    fn build(descriptor: &SourceDescriptor) -> Result<Box<dyn Connector>> {
        let endpoint = descriptor.config.get("endpoint").ok_or_else(|| {
            Error::InvalidRequest(vec![crate::FieldError::new("config.endpoint", "required for mock_http")])
        })?;
        let timeout_s: f64 = descriptor.config.get("timeout_s").and_then(|t| t.parse().ok()).unwrap_or(10.0);
        Ok(Box::new(MockHttp {
            endpoint: endpoint.trim_end_matches('/').to_owned(),
            timeout: Duration::from_secs_f64(timeout_s),
        }))
    }
}

impl Connector for MockHttp {
    fn fetch(&self, query: &str, since: Option<Timestamp>) -> std::result::Result<Vec<FetchedItem>, String> {
        let body = json!({ "query": query, "since": since.map(|t| t.to_string()) }).to_string();
        let (status, text) =
            post_json(&format!("{}/fetch", self.endpoint), &body, self.timeout).map_err(|e| match e {
                HttpFailure::Timeout => "connector timed out".to_owned(),
                HttpFailure::Transport(m) => m,
            })?;
        if status != 200 {
            return Err(format!("connector answered HTTP {status}"));
        }
        let items =
            match serde_json::from_str::<WireResponse>(&text).map_err(|e| format!("bad connector response: {e}"))? {
                WireResponse::List(items) | WireResponse::Wrapped { items } => items,
            };
        items
            .into_iter()
            .map(|item| {
                Ok(FetchedItem {
                    container_bytes: B64
                        .decode(item.container_bytes.as_bytes())
                        .map_err(|e| format!("item {}: bad base64: {e}", item.locator))?,
                    locator: item.locator,
                    license: item.license,
                })
            })
            .collect()
    }
}

/// Push-only source: clips arrive through `ingest_batch`, never by fetching.
struct Upload;

impl Upload {
    fn build(_descriptor: &SourceDescriptor) -> Result<Box<dyn Connector>> {
        Ok(Box::new(Upload))
    }
}

impl Connector for Upload {
    fn fetch(&self, _query: &str, _since: Option<Timestamp>) -> std::result::Result<Vec<FetchedItem>, String> {
        Ok(Vec::new())
    }
}
