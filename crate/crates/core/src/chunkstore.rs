//! Chunk naming, the chunk-index text file, per-node chunk accounting and
//! merge verification. Chunks are tracked by size only.
//!
//! Index grammar, one item per line, newline-terminated:
//!
//! ```text
//! file=<name>
//! size=<total bytes>
//! chunk=<chunk name>,<bytes>,<node ip>
//! ...
//! ```

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::node_agent::MB;
use crate::selection::ChunkPlan;
use crate::topology::HostId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub chunk_name: String,
    pub chunk_bytes: u64,
    pub node_ip: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexRecord {
    pub file_name: String,
    pub total_bytes: u64,
    pub entries: Vec<IndexEntry>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IndexError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("chunk sizes sum to {chunks} but the index declares {declared}")]
    SizeMismatch { declared: u64, chunks: u64 },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("node {node} has {free} bytes free, cannot store {requested}")]
    InsufficientCapacity { node: HostId, free: u64, requested: u64 },
    #[error("node {node} has no chunk named {chunk}")]
    UnknownChunk { node: HostId, chunk: String },
    #[error("node {node} already holds {chunk}")]
    DuplicateChunk { node: HostId, chunk: String },
}

/// `video.mp4` -> `video_1.mp4, video_2.mp4, ...`; names without a dot get
/// the suffix appended.
pub fn chunk_names(file_name: &str, k: usize) -> Vec<String> {
    let (stem, ext) = match file_name.rfind('.') {
        Some(i) if i > 0 => file_name.split_at(i),
        _ => (file_name, ""),
    };
    (1..=k).map(|i| format!("{stem}_{i}{ext}")).collect()
}

impl IndexRecord {
    pub fn from_plan(plan: &ChunkPlan) -> Self {
        let names = chunk_names(&plan.file_name, plan.entries.len());
        Self {
            file_name: plan.file_name.clone(),
            total_bytes: plan.total_bytes,
            entries: plan
                .entries
                .iter()
                .zip(names)
                .map(|(e, chunk_name)| IndexEntry { chunk_name, chunk_bytes: e.bytes, node_ip: e.ip.clone() })
                .collect(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!("file={}\nsize={}\n", self.file_name, self.total_bytes);
        for e in &self.entries {
            out.push_str(&format!("chunk={},{},{}\n", e.chunk_name, e.chunk_bytes, e.node_ip));
        }
        out
    }
}

pub fn write_index(plan: &ChunkPlan) -> String {
    IndexRecord::from_plan(plan).render()
}

pub fn read_index(text: &str) -> Result<IndexRecord, IndexError> {
    let malformed = |line: usize, reason: String| IndexError::Malformed { line, reason };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (n, first) = lines.next().ok_or_else(|| malformed(1, "empty index".into()))?;
    let file_name = first
        .strip_prefix("file=")
        .filter(|s| !s.is_empty())
        .ok_or_else(|| malformed(n, "expected file=<name>".into()))?
        .to_string();
    let (n, second) = lines.next().ok_or_else(|| malformed(2, "missing size line".into()))?;
    let total_bytes = second
        .strip_prefix("size=")
        .and_then(|s| s.parse::<u64>().ok())
        .ok_or_else(|| malformed(n, "expected size=<bytes>".into()))?;

    let mut entries = Vec::new();
    let mut names = BTreeSet::new();
    for (n, line) in lines {
        let body = line.strip_prefix("chunk=").ok_or_else(|| malformed(n, format!("unexpected line {line:?}")))?;
        // Chunk names may contain commas; ip and size cannot.
        let mut parts = body.rsplitn(3, ',');
        let (ip, bytes, name) = match (parts.next(), parts.next(), parts.next()) {
            (Some(ip), Some(bytes), Some(name)) if !name.is_empty() && !ip.is_empty() => (ip, bytes, name),
            _ => return Err(malformed(n, "expected chunk=<name>,<bytes>,<ip>".into())),
        };
        let chunk_bytes = bytes.parse::<u64>().map_err(|_| malformed(n, format!("bad chunk size {bytes:?}")))?;
        if !names.insert(name.to_string()) {
            return Err(malformed(n, format!("duplicate chunk {name}")));
        }
        entries.push(IndexEntry { chunk_name: name.to_string(), chunk_bytes, node_ip: ip.to_string() });
    }
    if entries.is_empty() {
        return Err(malformed(3, "index lists no chunks".into()));
    }
    if entries.iter().map(|e| e.chunk_name.as_str()).ne(chunk_names(&file_name, entries.len()).iter().map(String::as_str)) {
        return Err(malformed(3, "chunk names do not follow the _1.._k sequence".into()));
    }
    let chunks: u64 = entries.iter().map(|e| e.chunk_bytes).sum();
    if chunks != total_bytes {
        return Err(IndexError::SizeMismatch { declared: total_bytes, chunks });
    }
    Ok(IndexRecord { file_name, total_bytes, entries })
}

/// Simulated disk of one storage node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStore {
    pub node: HostId,
    capacity_bytes: u64,
    free_bytes: u64,
    used_bytes: u64,
    chunks: BTreeMap<String, u64>,
}

impl NodeStore {
    pub fn new(node: HostId, v_total_mb: u64, v_remaining_mb: u64) -> Self {
        let capacity_bytes = v_total_mb * MB;
        let free_bytes = v_remaining_mb.min(v_total_mb) * MB;
        Self { node, capacity_bytes, free_bytes, used_bytes: capacity_bytes - free_bytes, chunks: BTreeMap::new() }
    }

    pub fn free_bytes(&self) -> u64 {
        self.free_bytes
    }

    pub fn used_bytes(&self) -> u64 {
        self.used_bytes
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.capacity_bytes
    }

    pub fn v_remaining_mb(&self) -> u64 {
        self.free_bytes / MB
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn store_chunk(&mut self, chunk_name: &str, bytes: u64) -> Result<(), StoreError> {
        if self.chunks.contains_key(chunk_name) {
            return Err(StoreError::DuplicateChunk { node: self.node.clone(), chunk: chunk_name.to_string() });
        }
        if bytes > self.free_bytes {
            return Err(StoreError::InsufficientCapacity { node: self.node.clone(), free: self.free_bytes, requested: bytes });
        }
        self.free_bytes -= bytes;
        self.used_bytes += bytes;
        self.chunks.insert(chunk_name.to_string(), bytes);
        Ok(())
    }

    pub fn fetch_chunk(&self, chunk_name: &str) -> Result<u64, StoreError> {
        self.chunks
            .get(chunk_name)
            .copied()
            .ok_or_else(|| StoreError::UnknownChunk { node: self.node.clone(), chunk: chunk_name.to_string() })
    }

    pub fn remove_chunk(&mut self, chunk_name: &str) -> Result<u64, StoreError> {
        let bytes = self
            .chunks
            .remove(chunk_name)
            .ok_or_else(|| StoreError::UnknownChunk { node: self.node.clone(), chunk: chunk_name.to_string() })?;
        self.free_bytes += bytes;
        self.used_bytes -= bytes;
        Ok(bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedChunk {
    pub chunk_name: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MergeVerdict {
    Ok,
    CountMismatch { expected: usize, fetched: usize },
    OrderViolation { position: usize, expected: String, found: String },
    SizeViolation { expected: u64, found: u64 },
}

impl MergeVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, MergeVerdict::Ok)
    }
}

/// Checks that fetched chunks come in suffix order and add up to the file.
pub fn verify_merge(record: &IndexRecord, fetched: &[FetchedChunk]) -> MergeVerdict {
    if fetched.len() != record.entries.len() {
        return MergeVerdict::CountMismatch { expected: record.entries.len(), fetched: fetched.len() };
    }
    let expected = chunk_names(&record.file_name, record.entries.len());
    for (position, (want, got)) in expected.iter().zip(fetched).enumerate() {
        if want != &got.chunk_name {
            return MergeVerdict::OrderViolation { position, expected: want.clone(), found: got.chunk_name.clone() };
        }
    }
    let found: u64 = fetched.iter().map(|f| f.bytes).sum();
    if found != record.total_bytes {
        return MergeVerdict::SizeViolation { expected: record.total_bytes, found };
    }
    MergeVerdict::Ok
}
