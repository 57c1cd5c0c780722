//! Model cache keyed by distribution sketches.
//!
//! Entries are kept in least-recently-used order. A cache opened on a
//! directory persists every entry as `<id>.drmi` (sketch header followed by
//! the index blob) plus a `manifest.json` listing entries in LRU order;
//! entry bodies are read only when an entry is actually reused.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::debug;
use serde::{Deserialize, Serialize};

use super::sketch::{sketch_mse, DistributionSketch};
use crate::error::{Error, Result};
use crate::index::serialize::Reader;
use crate::index::StagedIndex;
use crate::models::ModelArch;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ENTRY_EXTENSION: &str = "drmi";
const SKETCH_MAGIC: [u8; 4] = *b"DSKT";
const SKETCH_VERSION: u16 = 1;
const MANIFEST_VERSION: u32 = 1;

/// Default similarity threshold on sketch MSE.
pub const DEFAULT_TAU: f64 = 1e-3;
pub const DEFAULT_CAPACITY: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub id: String,
    pub sketch: DistributionSketch,
    pub arch: ModelArch,
    pub leaves: usize,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub train_loss: f64,
    #[serde(skip)]
    blob: Option<Vec<u8>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    next_id: u64,
    entries: Vec<CacheEntry>,
}

#[derive(Debug)]
pub struct ModelCache {
    /// Front is least recently used.
    entries: Vec<CacheEntry>,
    threshold: f64,
    capacity: usize,
    dir: Option<PathBuf>,
    next_id: u64,
}

impl ModelCache {
    /// A cache that lives only in memory.
    pub fn in_memory(capacity: usize, threshold: f64) -> Self {
        Self {
            entries: Vec::new(),
            threshold,
            capacity: capacity.max(1),
            dir: None,
            next_id: 1,
        }
    }

    /// Opens (or creates) a persistent cache under `dir`.
    pub fn open(dir: impl AsRef<Path>, capacity: usize, threshold: f64) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut cache = Self {
            dir: Some(dir.clone()),
            ..Self::in_memory(capacity, threshold)
        };
        let manifest_path = dir.join(MANIFEST_FILE);
        if manifest_path.exists() {
            let manifest: Manifest = serde_json::from_slice(&fs::read(&manifest_path)?)?;
            if manifest.version != MANIFEST_VERSION {
                return Err(Error::Format(format!(
                    "unsupported manifest version {}",
                    manifest.version
                )));
            }
            cache.entries = manifest.entries;
            cache.next_id = manifest.next_id;
            // Shrinking the capacity on reopen evicts the oldest entries.
            while cache.entries.len() > cache.capacity {
                cache.evict_front()?;
            }
            cache.write_manifest()?;
        }
        Ok(cache)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Entries from least to most recently used.
    pub fn entries(&self) -> &[CacheEntry] {
        &self.entries
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.id.as_str()).collect()
    }

    /// Nearest entry by sketch MSE without touching recency.
    pub fn nearest(&self, sketch: &DistributionSketch) -> (Option<&CacheEntry>, f64) {
        match self.nearest_index(sketch) {
            Some((i, mse)) => (Some(&self.entries[i]), mse),
            None => (None, f64::INFINITY),
        }
    }

    fn nearest_index(&self, sketch: &DistributionSketch) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in self.entries.iter().enumerate() {
            // Sketches of another length are not comparable.
            let Ok(mse) = sketch_mse(&e.sketch, sketch) else {
                continue;
            };
            if best.is_none_or(|(_, b)| mse < b) {
                best = Some((i, mse));
            }
        }
        best
    }

    /// Linear scan for the entry with the smallest sketch MSE. A hit (MSE
    /// within the threshold) becomes the most recently used entry.
    pub fn lookup(&mut self, sketch: &DistributionSketch) -> (Option<&CacheEntry>, f64) {
        match self.nearest_index(sketch) {
            None => (None, f64::INFINITY),
            Some((i, mse)) => {
                let i = if mse <= self.threshold {
                    let e = self.entries.remove(i);
                    self.entries.push(e);
                    self.entries.len() - 1
                } else {
                    i
                };
                if self.dir.is_some() && mse <= self.threshold {
                    if let Err(e) = self.write_manifest() {
                        debug!("could not persist LRU order: {e}");
                    }
                }
                (Some(&self.entries[i]), mse)
            }
        }
    }

    /// Adds an entry as most recently used, evicting the least recently used
    /// entries beyond capacity. Returns the new entry's id.
    pub fn insert(
        &mut self,
        sketch: DistributionSketch,
        index: &StagedIndex,
        train_loss: f64,
    ) -> Result<String> {
        let id = format!("e{:06}", self.next_id);
        self.next_id += 1;
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let entry = CacheEntry {
            id: id.clone(),
            sketch,
            arch: index.arch(),
            leaves: index.leaf_count(),
            created_at,
            train_loss,
            blob: Some(index.to_bytes()),
        };
        if let Some(dir) = &self.dir {
            fs::write(entry_path(dir, &id), encode_entry(&entry))?;
        }
        self.entries.push(entry);
        while self.entries.len() > self.capacity {
            self.evict_front()?;
        }
        if self.dir.is_some() {
            self.write_manifest()?;
        }
        Ok(id)
    }

    /// Deserializes the model stored under `id`, reading it from disk on
    /// first use.
    pub fn load_index(&mut self, id: &str) -> Result<StagedIndex> {
        let pos = self
            .entries
            .iter()
            .position(|e| e.id == id)
            .ok_or_else(|| Error::InvalidConfig(format!("no cache entry {id}")))?;
        if self.entries[pos].blob.is_none() {
            let dir = self
                .dir
                .as_ref()
                .ok_or_else(|| Error::Format(format!("entry {id} has no parameters")))?;
            let bytes = fs::read(entry_path(dir, id))?;
            let (sketch, blob) = decode_entry(&bytes)?;
            if sketch != self.entries[pos].sketch {
                return Err(Error::Format(format!(
                    "entry {id} disagrees with the manifest"
                )));
            }
            self.entries[pos].blob = Some(blob.to_vec());
        }
        let index = StagedIndex::from_bytes(self.entries[pos].blob.as_ref().expect("loaded"))?;
        let e = &self.entries[pos];
        if index.arch() != e.arch || index.leaf_count() != e.leaves {
            return Err(Error::Format(format!(
                "entry {id} holds {} x {} but the manifest says {} x {}",
                index.arch(),
                index.leaf_count(),
                e.arch,
                e.leaves
            )));
        }
        Ok(index)
    }

    /// Removes every entry (and its file).
    pub fn clear(&mut self) -> Result<()> {
        while !self.entries.is_empty() {
            self.evict_front()?;
        }
        self.write_manifest()
    }

    fn evict_front(&mut self) -> Result<()> {
        let e = self.entries.remove(0);
        debug!("evicting cache entry {}", e.id);
        if let Some(dir) = &self.dir {
            let path = entry_path(dir, &e.id);
            if path.exists() {
                fs::remove_file(path)?;
            }
        }
        Ok(())
    }

    fn write_manifest(&self) -> Result<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            next_id: self.next_id,
            entries: self.entries.clone(),
        };
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_vec_pretty(&manifest)?)?;
        fs::rename(tmp, dir.join(MANIFEST_FILE))?;
        Ok(())
    }
}

fn entry_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.{ENTRY_EXTENSION}"))
}

/// `"DSKT" u16 version u32 K, K x f64`, then the index blob.
fn encode_entry(entry: &CacheEntry) -> Vec<u8> {
    let values = entry.sketch.values();
    let blob = entry.blob.as_deref().unwrap_or_default();
    let mut out = Vec::with_capacity(10 + values.len() * 8 + blob.len());
    out.extend_from_slice(&SKETCH_MAGIC);
    out.extend_from_slice(&SKETCH_VERSION.to_le_bytes());
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(blob);
    out
}

fn decode_entry(bytes: &[u8]) -> Result<(DistributionSketch, &[u8])> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != SKETCH_MAGIC {
        return Err(Error::Format("bad sketch header".into()));
    }
    let version = r.u16()?;
    if version != SKETCH_VERSION {
        return Err(Error::Format(format!(
            "unsupported sketch version {version}"
        )));
    }
    let k = r.u32()? as usize;
    let values = (0..k).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    Ok((DistributionSketch::new(values)?, r.rest()))
}
