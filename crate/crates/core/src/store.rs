//! On-disk store: content-addressed containers plus append-only record logs.
//!
//! ```text
//! <root>/store/clips/<2hex>/<clip_id>.vdc
//! <root>/store/records/clips.log        {record, provenance} per line
//! <root>/store/records/metadata.log     EnrichmentMetadata per line
//! <root>/store/records/annotations.log  AnnotationRecord per line
//! <root>/store/index/snapshot.bin
//! <root>/store/jobs/<job_id>.json
//! <root>/sources.json, <root>/annotators.json
//! ```
//!
//! In every log the latest line for a clip wins. Logs are loaded into memory
//! on open; all writes go through a single writer lock so the dedup
//! check-and-insert is atomic.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::annotation::AnnotationRecord;
use crate::error::{Error, Result};
use crate::model::{canonical, ClipId, ClipRecord, ClipStatus, EnrichmentMetadata, ProvenanceChain};

const CLIPS_LOG: &str = "clips.log";
const METADATA_LOG: &str = "metadata.log";
const ANNOTATIONS_LOG: &str = "annotations.log";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredClip {
    pub record: ClipRecord,
    pub provenance: ProvenanceChain,
}

#[derive(Debug, Default)]
struct State {
    clips: BTreeMap<ClipId, StoredClip>,
    metadata: BTreeMap<ClipId, EnrichmentMetadata>,
    metadata_lines: u64,
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    state: RwLock<State>,
    writer: Mutex<()>,
}

impl Store {
    /// Opens (creating if needed) the store rooted at `root`.
    pub fn open(root: impl AsRef<Path>) -> Result<Store> {
        let root = root.as_ref().to_path_buf();
        for dir in ["store/clips", "store/records", "store/index", "store/jobs"] {
            fs::create_dir_all(root.join(dir))?;
        }
        let store = Store { root, state: RwLock::new(State::default()), writer: Mutex::new(()) };
        store.reload()?;
        Ok(store)
    }

    fn reload(&self) -> Result<()> {
        let mut state = State::default();
        for clip in read_log::<StoredClip>(&self.records_dir().join(CLIPS_LOG))? {
            state.clips.insert(clip.record.clip_id.clone(), clip);
        }
        for meta in read_log::<EnrichmentMetadata>(&self.records_dir().join(METADATA_LOG))? {
            state.metadata_lines += 1;
            state.metadata.insert(meta.clip_id.clone(), meta);
        }
        *self.state.write().unwrap() = state;
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn records_dir(&self) -> PathBuf {
        self.root.join("store/records")
    }

    pub fn index_dir(&self) -> PathBuf {
        self.root.join("store/index")
    }

    pub fn jobs_dir(&self) -> PathBuf {
        self.root.join("store/jobs")
    }

    pub fn default_packages_dir(&self) -> PathBuf {
        self.root.join("packages")
    }

    pub fn container_path(&self, clip_id: &ClipId) -> PathBuf {
        let id = clip_id.as_str();
        self.root.join("store/clips").join(&id[..2]).join(format!("{id}.vdc"))
    }

    /// Stores a new clip unless its id is already known. Returns whether the
    /// clip was inserted.
    pub fn insert_clip_if_absent(&self, record: ClipRecord, provenance: ProvenanceChain, bytes: &[u8]) -> Result<bool> {
        let _w = self.writer.lock().unwrap();
        if self.state.read().unwrap().clips.contains_key(&record.clip_id) {
            return Ok(false);
        }
        let path = self.container_path(&record.clip_id);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        write_atomic(&path, bytes)?;
        let stored = StoredClip { record, provenance };
        append_line(&self.records_dir().join(CLIPS_LOG), &canonical::to_string(&stored))?;
        self.state.write().unwrap().clips.insert(stored.record.clip_id.clone(), stored);
        Ok(true)
    }

    /// Replaces the record of an existing clip, keeping its provenance.
    pub fn update_record(&self, record: ClipRecord) -> Result<()> {
        let _w = self.writer.lock().unwrap();
        let provenance = self
            .state
            .read()
            .unwrap()
            .clips
            .get(&record.clip_id)
            .map(|c| c.provenance.clone())
            .ok_or_else(|| Error::UnknownClip(record.clip_id.to_string()))?;
        let stored = StoredClip { record, provenance };
        append_line(&self.records_dir().join(CLIPS_LOG), &canonical::to_string(&stored))?;
        self.state.write().unwrap().clips.insert(stored.record.clip_id.clone(), stored);
        Ok(())
    }

    pub fn set_status(&self, clip_id: &ClipId, status: ClipStatus) -> Result<()> {
        let mut record = self.record(clip_id).ok_or_else(|| Error::UnknownClip(clip_id.to_string()))?;
        if record.status == status {
            return Ok(());
        }
        record.status = status;
        self.update_record(record)
    }

    pub fn put_metadata(&self, metadata: &EnrichmentMetadata) -> Result<()> {
        let _w = self.writer.lock().unwrap();
        append_line(&self.records_dir().join(METADATA_LOG), &canonical::to_string(metadata))?;
        let mut state = self.state.write().unwrap();
        state.metadata_lines += 1;
        state.metadata.insert(metadata.clip_id.clone(), metadata.clone());
        Ok(())
    }

    pub fn append_annotations(&self, records: &[AnnotationRecord]) -> Result<()> {
        if records.is_empty() {
            return Ok(());
        }
        let _w = self.writer.lock().unwrap();
        let mut text = String::new();
        for record in records {
            text.push_str(&canonical::to_string(record));
            text.push('\n');
        }
        append_raw(&self.records_dir().join(ANNOTATIONS_LOG), text.as_bytes())
    }

    /// Full annotation history of one clip, oldest first.
    pub fn annotations(&self, clip_id: &ClipId) -> Result<Vec<AnnotationRecord>> {
        Ok(read_log::<AnnotationRecord>(&self.records_dir().join(ANNOTATIONS_LOG))?
            .into_iter()
            .filter(|r| &r.clip_id == clip_id)
            .collect())
    }

    pub fn clip(&self, clip_id: &ClipId) -> Option<StoredClip> {
        self.state.read().unwrap().clips.get(clip_id).cloned()
    }

    pub fn record(&self, clip_id: &ClipId) -> Option<ClipRecord> {
        self.state.read().unwrap().clips.get(clip_id).map(|c| c.record.clone())
    }

    pub fn contains(&self, clip_id: &ClipId) -> bool {
        self.state.read().unwrap().clips.contains_key(clip_id)
    }

    /// All clips ordered by id.
    pub fn clips(&self) -> Vec<StoredClip> {
        self.state.read().unwrap().clips.values().cloned().collect()
    }

    pub fn clip_count(&self) -> usize {
        self.state.read().unwrap().clips.len()
    }

    pub fn metadata(&self, clip_id: &ClipId) -> Option<EnrichmentMetadata> {
        self.state.read().unwrap().metadata.get(clip_id).cloned()
    }

    /// Number of lines in the metadata log; snapshots are keyed on it.
    pub fn metadata_log_len(&self) -> u64 {
        self.state.read().unwrap().metadata_lines
    }

    pub fn read_container(&self, clip_id: &ClipId) -> Result<Vec<u8>> {
        fs::read(self.container_path(clip_id)).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingPayload(clip_id.to_string()),
            _ => Error::Io(e),
        })
    }

    /// Reads a JSON document stored at `<root>/<name>`, if present.
    pub fn load_json<T: DeserializeOwned>(&self, name: &str) -> Result<Option<T>> {
        let path = self.root.join(name);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| Error::CorruptStore { file: path.display().to_string(), message: e.to_string() }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut text = canonical::to_string(value);
        text.push('\n');
        write_atomic(&path, text.as_bytes())
    }
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut file = File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut buf = Vec::with_capacity(line.len() + 1);
    buf.extend_from_slice(line.as_bytes());
    buf.push(b'\n');
    append_raw(path, &buf)
}

fn append_raw(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(bytes)?;
    Ok(())
}

fn read_log<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::CorruptStore {
            file: path.display().to_string(),
            message: format!("line {}: {e}", n + 1),
        })?);
    }
    Ok(out)
}
