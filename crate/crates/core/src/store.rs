//! On-disk store of H-space vectors.
//!
//! Layout of a store directory:
//!
//! ```text
//! <dir>/manifest.json           format_version 1, records sorted by id
//! <dir>/vectors/<id>.f32        little-endian float32, (channel, height, width) order
//! ```
//!
//! Record ids are the SHA-256 of the raw value bytes followed by the
//! canonical JSON of the record metadata (timestamps excluded), so writing
//! the same record twice is a no-op.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Component, Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hvector::{HVector, PromptSpec, Shape, TimestepMode};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const LOCK_FILE: &str = ".lock";
const VECTOR_DIR: &str = "vectors";

pub type Tags = BTreeMap<String, String>;

/// Tag keys written by the built-in corpora and read by the analyses.
pub mod keys {
    pub const CORPUS: &str = "corpus";
    pub const SECTION: &str = "section";
    pub const ITEM: &str = "item";
    pub const KEY: &str = "key";
    pub const PROFESSION: &str = "profession";
    pub const SCENARIO: &str = "scenario";
    pub const GENDER: &str = "gender";
    pub const VARIANT: &str = "variant";
    pub const SEED: &str = "seed";
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorRecord {
    id: String,
    pub hvector: HVector,
    pub tags: Tags,
}

impl VectorRecord {
    pub fn new(hvector: HVector, tags: Tags) -> Self {
        let id = content_id(&hvector, &tags);
        Self { id, hvector, tags }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn tag(&self, key: &str) -> Option<&str> {
        self.tags.get(key).map(String::as_str)
    }
}

#[derive(Serialize)]
struct CanonicalMeta<'a> {
    shape: [usize; 3],
    prompt: &'a PromptSpec,
    model_id: &'a str,
    timestep_mode: &'a TimestepMode,
    tags: &'a Tags,
    sources: &'a [String],
}

fn content_id(v: &HVector, tags: &Tags) -> String {
    let mut h = Sha256::new();
    for x in &v.values {
        h.update(x.to_le_bytes());
    }
    let meta = CanonicalMeta {
        shape: [v.shape.channels, v.shape.height, v.shape.width],
        prompt: &v.prompt,
        model_id: &v.model_id,
        timestep_mode: &v.timestep_mode,
        tags,
        sources: &v.sources,
    };
    h.update(serde_json::to_vec(&meta).expect("metadata serializes"));
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub prompt: PromptSpec,
    pub model_id: String,
    pub timestep_mode: TimestepMode,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
    pub shape: [usize; 3],
    pub tags: Tags,
    pub meta: RecordMeta,
}

impl ManifestEntry {
    pub fn shape(&self) -> Shape {
        Shape::new(self.shape[0], self.shape[1], self.shape[2])
    }

    pub fn matches(&self, filter: &Tags) -> bool {
        filter.iter().all(|(k, v)| self.tags.get(k) == Some(v))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoreManifest {
    pub format_version: u32,
    pub records: Vec<ManifestEntry>,
}

struct WriteLock(PathBuf);

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub struct VectorStore {
    root: PathBuf,
    entries: BTreeMap<String, ManifestEntry>,
    lock: Option<WriteLock>,
}

impl std::fmt::Debug for VectorStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VectorStore")
            .field("root", &self.root)
            .field("records", &self.entries.len())
            .field("writable", &self.lock.is_some())
            .finish()
    }
}

impl VectorStore {
    /// Opens an existing store for reading.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        if !root.is_dir() {
            return Err(Error::io(
                &root,
                std::io::Error::new(std::io::ErrorKind::NotFound, "store directory not found"),
            ));
        }
        let entries = load_manifest(&root)?;
        Ok(Self {
            root,
            entries,
            lock: None,
        })
    }

    /// Opens (creating if needed) a store and takes the exclusive writer lock.
    pub fn open_writable(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join(VECTOR_DIR)).map_err(|e| Error::io(&root, e))?;
        let lock_path = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock_path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::StoreLocked(root));
            }
            Err(e) => return Err(Error::io(&lock_path, e)),
        }
        let lock = WriteLock(lock_path);
        let entries = load_manifest(&root)?;
        Ok(Self {
            root,
            entries,
            lock: Some(lock),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.values()
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.get(id)
    }

    /// Persists a record. Re-putting an identical record returns the same id
    /// without touching disk.
    pub fn put(&mut self, record: &VectorRecord) -> Result<String> {
        if self.lock.is_none() {
            return Err(Error::ReadOnly);
        }
        record.hvector.validate()?;
        let id = content_id(&record.hvector, &record.tags);
        if self.entries.contains_key(&id) {
            return Ok(id);
        }
        let rel = format!("{VECTOR_DIR}/{id}.f32");
        let path = self.root.join(&rel);
        let bytes: Vec<u8> = record.hvector.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        write_atomic(&path, &bytes)?;

        let v = &record.hvector;
        self.entries.insert(
            id.clone(),
            ManifestEntry {
                id: id.clone(),
                path: rel,
                shape: [v.shape.channels, v.shape.height, v.shape.width],
                tags: record.tags.clone(),
                meta: RecordMeta {
                    prompt: v.prompt.clone(),
                    model_id: v.model_id.clone(),
                    timestep_mode: v.timestep_mode,
                    created_at: v.created_at,
                    sources: v.sources.clone(),
                },
            },
        );
        if let Err(e) = self.write_manifest() {
            self.entries.remove(&id);
            return Err(e);
        }
        Ok(id)
    }

    fn write_manifest(&self) -> Result<()> {
        let manifest = StoreManifest {
            format_version: FORMAT_VERSION,
            records: self.entries.values().cloned().collect(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&self.root.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn get(&self, id: &str) -> Result<VectorRecord> {
        let entry = self.entries.get(id).ok_or_else(|| Error::UnknownId(id.to_string()))?;
        self.load(entry)
    }

    fn load(&self, entry: &ManifestEntry) -> Result<VectorRecord> {
        let path = self.root.join(&entry.path);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let shape = entry.shape();
        if bytes.len() != 4 * shape.len() {
            return Err(Error::ManifestCorrupt(format!(
                "record {} has {} bytes, expected {}",
                entry.id,
                bytes.len(),
                4 * shape.len()
            )));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let meta = entry.meta.clone();
        let hvector = HVector {
            values,
            shape,
            prompt: meta.prompt,
            model_id: meta.model_id,
            timestep_mode: meta.timestep_mode,
            created_at: meta.created_at,
            sources: meta.sources,
        };
        Ok(VectorRecord {
            id: entry.id.clone(),
            hvector,
            tags: entry.tags.clone(),
        })
    }

    /// Manifest entries whose tags contain every `filter` pair, ordered by id.
    pub fn query_entries<'a>(&'a self, filter: &Tags) -> impl Iterator<Item = &'a ManifestEntry> + use<'a> {
        let filter = filter.clone();
        self.entries.values().filter(move |e| e.matches(&filter))
    }

    /// Records whose tags contain every `filter` pair, ordered by id.
    pub fn query(&self, filter: &Tags) -> Result<Vec<VectorRecord>> {
        self.query_entries(filter).map(|e| self.load(e)).collect()
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn load_manifest(root: &Path) -> Result<BTreeMap<String, ManifestEntry>> {
    let path = root.join(MANIFEST_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
        Err(e) => return Err(Error::io(&path, e)),
    };
    let manifest: StoreManifest =
        serde_json::from_str(&text).map_err(|e| Error::ManifestCorrupt(format!("{}: {e}", path.display())))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::ManifestCorrupt(format!(
            "unsupported format_version {}",
            manifest.format_version
        )));
    }
    let mut entries = BTreeMap::new();
    for entry in manifest.records {
        let rel = Path::new(&entry.path);
        if rel.is_absolute() || rel.components().any(|c| matches!(c, Component::ParentDir)) {
            return Err(Error::ManifestCorrupt(format!(
                "record {} points outside the store: {}",
                entry.id, entry.path
            )));
        }
        let expected = 4 * entry.shape().len() as u64;
        let actual = fs::metadata(root.join(rel))
            .map_err(|e| Error::ManifestCorrupt(format!("record {} file {}: {e}", entry.id, entry.path)))?
            .len();
        if actual != expected {
            return Err(Error::ManifestCorrupt(format!(
                "record {} file {} has {actual} bytes, expected {expected}",
                entry.id, entry.path
            )));
        }
        if entries.insert(entry.id.clone(), entry).is_some() {
            return Err(Error::ManifestCorrupt("duplicate record id".into()));
        }
    }
    Ok(entries)
}

/// Element-wise mean of `records`, accumulated in f64.
///
/// Provenance is taken from the first record; `sources` lists every
/// contributing id.
pub fn average(records: &[VectorRecord]) -> Result<HVector> {
    let first = records.first().ok_or(Error::EmptyInput)?;
    let shape = first.hvector.shape;
    let mut acc = vec![0.0f64; shape.len()];
    for r in records {
        first.hvector.ensure_same_shape(&r.hvector)?;
        for (a, &x) in acc.iter_mut().zip(&r.hvector.values) {
            *a += f64::from(x);
        }
    }
    let n = records.len() as f64;
    let mut out = HVector::new(
        acc.into_iter().map(|a| (a / n) as f32).collect(),
        shape,
        first.hvector.prompt.clone(),
        first.hvector.model_id.clone(),
        first.hvector.timestep_mode,
    )?;
    out.sources = records.iter().map(|r| r.id.clone()).collect();
    Ok(out)
}

/// Builds a tag map from `key=value` pairs.
pub fn tags<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Tags {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}
