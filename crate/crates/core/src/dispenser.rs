//! Chunked input iterator with dynamic assignment and exactly-once
//! accounting.
//!
//! A [`WorkPool`] cuts an input into many more chunks than there are
//! workers and hands them out on request. Fast workers ask more often and
//! so do more of the work; a worker that joins late simply starts asking.
//! When a worker fails, whatever it had not finished goes back to the
//! pending pile, while what it finished stays finished.
//!
//! Every chunk carries a `token_id` derived from the input digest and the
//! chunk's start offset, so a chunk keeps its identity across re-reads.
//! Each hand-out is a separate use of that token; [`DedupSink`] keeps
//! `(token, use)` pairs so duplicates collapse and re-reads stay visible.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::hash::{hash_pair, StreamHasher};
use crate::runtime::WorkerId;

/// Chunks per initial worker when the chunk length is not given.
pub const DEFAULT_CHUNKS_PER_WORKER: u64 = 8;

#[derive(Debug, Error)]
pub enum DispenserError {
    #[error("cannot read input: {0}")]
    Io(#[from] io::Error),
    #[error("chunk length must be positive")]
    ZeroChunkLen,
    #[error("worker {0} is not registered with the pool")]
    UnknownWorker(WorkerId),
    #[error("worker {worker} does not hold the chunk at offset {start}")]
    NotAssigned { worker: WorkerId, start: u64 },
}

/// Where the bytes come from.
#[derive(Debug, Clone)]
pub enum Source {
    File(PathBuf),
    Memory(Arc<Vec<u8>>),
}

impl Source {
    pub fn len(&self) -> io::Result<u64> {
        match self {
            Source::File(p) => Ok(std::fs::metadata(p)?.len()),
            Source::Memory(b) => Ok(b.len() as u64),
        }
    }

    pub fn is_empty(&self) -> io::Result<bool> {
        Ok(self.len()? == 0)
    }

    pub fn digest(&self) -> io::Result<u64> {
        let mut h = StreamHasher::new(0);
        match self {
            Source::File(p) => {
                let mut f = File::open(p)?;
                let mut buf = vec![0u8; 64 * 1024];
                loop {
                    let n = f.read(&mut buf)?;
                    if n == 0 {
                        break;
                    }
                    h.update(&buf[..n]);
                }
            }
            Source::Memory(b) => h.update(b),
        }
        Ok(h.finish())
    }

    /// Bytes `[start, start + len)`, cut short at the end of the input.
    pub fn read_range(&self, start: u64, len: u64) -> io::Result<Vec<u8>> {
        match self {
            Source::File(p) => {
                let mut f = File::open(p)?;
                f.seek(SeekFrom::Start(start))?;
                let mut out = Vec::with_capacity(len as usize);
                f.take(len).read_to_end(&mut out)?;
                Ok(out)
            }
            Source::Memory(b) => {
                let lo = (start as usize).min(b.len());
                let hi = (start.saturating_add(len) as usize).min(b.len());
                Ok(b[lo..hi].to_vec())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Chunk {
    pub index: usize,
    pub start: u64,
    pub len: u64,
    pub token_id: u64,
}

impl Chunk {
    pub fn end(&self) -> u64 {
        self.start + self.len
    }
}

/// A chunk handed to a worker. `attempt` counts earlier hand-outs of the
/// same chunk, so anything above zero is a reassignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub chunk: Chunk,
    pub attempt: u32,
}

#[derive(Debug, Clone)]
pub struct WorkPool {
    source: Source,
    file_len: u64,
    digest: u64,
    chunks: Vec<Chunk>,
    pending: BTreeSet<usize>,
    assigned: BTreeMap<WorkerId, BTreeSet<usize>>,
    completed: BTreeSet<usize>,
    handed_out: Vec<u32>,
    requests: BTreeMap<WorkerId, u64>,
    completions: BTreeMap<WorkerId, u64>,
}

/// Chunk length that yields about `DEFAULT_CHUNKS_PER_WORKER` chunks per worker.
pub fn default_chunk_len(file_len: u64, workers: u32) -> u64 {
    let target = DEFAULT_CHUNKS_PER_WORKER * u64::from(workers.max(1));
    file_len.div_ceil(target).max(1)
}

impl WorkPool {
    pub fn open(path: impl AsRef<Path>, chunk_len: u64) -> Result<Self, DispenserError> {
        let path = path.as_ref();
        File::open(path)?;
        Self::from_source(Source::File(path.to_owned()), chunk_len)
    }

    pub fn from_bytes(bytes: impl Into<Vec<u8>>, chunk_len: u64) -> Result<Self, DispenserError> {
        Self::from_source(Source::Memory(Arc::new(bytes.into())), chunk_len)
    }

    pub fn from_source(source: Source, chunk_len: u64) -> Result<Self, DispenserError> {
        if chunk_len == 0 {
            return Err(DispenserError::ZeroChunkLen);
        }
        let file_len = source.len()?;
        let digest = source.digest()?;
        let chunks: Vec<Chunk> = (0..file_len.div_ceil(chunk_len))
            .map(|i| {
                let start = i * chunk_len;
                Chunk {
                    index: i as usize,
                    start,
                    len: chunk_len.min(file_len - start),
                    token_id: hash_pair(digest, start),
                }
            })
            .collect();
        Ok(Self {
            source,
            file_len,
            digest,
            pending: (0..chunks.len()).collect(),
            handed_out: vec![0; chunks.len()],
            chunks,
            assigned: BTreeMap::new(),
            completed: BTreeSet::new(),
            requests: BTreeMap::new(),
            completions: BTreeMap::new(),
        })
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn file_len(&self) -> u64 {
        self.file_len
    }

    pub fn digest(&self) -> u64 {
        self.digest
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn register(&mut self, worker: WorkerId) {
        self.assigned.entry(worker).or_default();
    }

    pub fn is_registered(&self, worker: WorkerId) -> bool {
        self.assigned.contains_key(&worker)
    }

    pub fn workers(&self) -> impl Iterator<Item = WorkerId> + '_ {
        self.assigned.keys().copied()
    }

    /// Hands the lowest pending chunk to `worker`; `None` once nothing is
    /// pending (chunks may still be in progress elsewhere).
    pub fn next(&mut self, worker: WorkerId) -> Result<Option<Assignment>, DispenserError> {
        let held = self
            .assigned
            .get_mut(&worker)
            .ok_or(DispenserError::UnknownWorker(worker))?;
        *self.requests.entry(worker).or_default() += 1;
        let Some(idx) = self.pending.pop_first() else {
            return Ok(None);
        };
        held.insert(idx);
        let attempt = self.handed_out[idx];
        self.handed_out[idx] += 1;
        Ok(Some(Assignment {
            chunk: self.chunks[idx],
            attempt,
        }))
    }

    pub fn complete(&mut self, worker: WorkerId, chunk: &Chunk) -> Result<(), DispenserError> {
        let held = self
            .assigned
            .get_mut(&worker)
            .ok_or(DispenserError::UnknownWorker(worker))?;
        if !held.remove(&chunk.index) {
            return Err(DispenserError::NotAssigned {
                worker,
                start: chunk.start,
            });
        }
        self.completed.insert(chunk.index);
        *self.completions.entry(worker).or_default() += 1;
        Ok(())
    }

    /// Removes `worker`; its unfinished chunks go back to pending and are
    /// returned in offset order.
    pub fn fail(&mut self, worker: WorkerId) -> Result<Vec<Chunk>, DispenserError> {
        let held = self
            .assigned
            .remove(&worker)
            .ok_or(DispenserError::UnknownWorker(worker))?;
        self.pending.extend(held.iter().copied());
        Ok(held.into_iter().map(|i| self.chunks[i]).collect())
    }

    pub fn pending(&self) -> impl Iterator<Item = &Chunk> {
        self.pending.iter().map(|&i| &self.chunks[i])
    }

    pub fn assigned(&self, worker: WorkerId) -> impl Iterator<Item = &Chunk> {
        self.assigned
            .get(&worker)
            .into_iter()
            .flatten()
            .map(|&i| &self.chunks[i])
    }

    pub fn completed(&self) -> impl Iterator<Item = &Chunk> {
        self.completed.iter().map(|&i| &self.chunks[i])
    }

    pub fn is_completed(&self, chunk: &Chunk) -> bool {
        self.completed.contains(&chunk.index)
    }

    pub fn is_exhausted(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn is_done(&self) -> bool {
        self.completed.len() == self.chunks.len()
    }

    /// Times `worker` called [`Self::next`].
    pub fn requests(&self, worker: WorkerId) -> u64 {
        self.requests.get(&worker).copied().unwrap_or(0)
    }

    pub fn completions(&self, worker: WorkerId) -> u64 {
        self.completions.get(&worker).copied().unwrap_or(0)
    }

    /// Bytes a reader needs for `chunk`: the chunk itself plus `overlap`
    /// bytes of lookahead for items that start inside it.
    pub fn read(&self, chunk: &Chunk, overlap: u64) -> io::Result<Vec<u8>> {
        self.source.read_range(chunk.start, chunk.len + overlap)
    }

    /// Checks that pending, assigned and completed partition the chunks.
    pub fn accounting_holds(&self) -> bool {
        let mut seen = BTreeSet::new();
        let all = self
            .pending
            .iter()
            .chain(self.assigned.values().flatten())
            .chain(self.completed.iter());
        for &i in all {
            if !seen.insert(i) {
                return false;
            }
        }
        seen.len() == self.chunks.len()
    }
}

/// Exactly-once sink over at-least-once input: remembers every
/// `(token, use)` pair it has seen.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DedupSink {
    seen: BTreeSet<(u64, u64)>,
}

impl DedupSink {
    pub fn new() -> Self {
        Self::default()
    }

    /// True the first time a pair is seen.
    pub fn accept(&mut self, token_id: u64, use_id: u64) -> bool {
        self.seen.insert((token_id, use_id))
    }

    pub fn tokens(&self) -> BTreeSet<u64> {
        self.seen.iter().map(|(t, _)| *t).collect()
    }

    pub fn uses(&self, token_id: u64) -> impl Iterator<Item = u64> + '_ {
        self.seen
            .range((token_id, 0)..=(token_id, u64::MAX))
            .map(|(_, u)| *u)
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

pub fn dedup_sink(envelopes: impl IntoIterator<Item = (u64, u64)>) -> DedupSink {
    let mut sink = DedupSink::new();
    for (t, u) in envelopes {
        sink.accept(t, u);
    }
    sink
}
