//! k-mer counting: input parsing, the sequential oracle, and the
//! distributed implementations that run on the simulator.
//!
//! Every distributed variant ingests the input through a
//! [`crate::dispenser::WorkPool`] and stamps each k-mer instance with its
//! byte offset in the input, which serves as the instance's token id.

mod ingest;
mod workloads;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Value};
use thiserror::Error;

use crate::dispenser::{DispenserError, Source};
use crate::runtime::RuntimeError;

pub use ingest::{IngestDriver, KmerRun, Sabotage};
pub use workloads::{
    buddi_kmer_query, guarded_count_program, guarded_count_run, impl_a_run, impl_a_sets,
    impl_b_run, BuddiOutcome, GuardMerge, KmerOutcome, ThresholdOutcome,
};

pub const DEFAULT_K: usize = 4;
pub const MAX_K: usize = 31;

#[derive(Debug, Error)]
pub enum KmerError {
    #[error("invalid base {base:?} at line {line}, column {column}")]
    InvalidBase {
        base: char,
        line: usize,
        column: usize,
    },
    #[error("k must be between 1 and {MAX_K}, got {0}")]
    BadK(usize),
    #[error("threshold must be at least 1")]
    ZeroThreshold,
    #[error(transparent)]
    Dispenser(#[from] DispenserError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("cannot read corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Table(#[from] crate::tables::TableError),
}

pub fn check_k(k: usize) -> Result<(), KmerError> {
    if (1..=MAX_K).contains(&k) {
        Ok(())
    } else {
        Err(KmerError::BadK(k))
    }
}

/// A string over `ACGT`, stored uppercase.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DnaSequence(String);

impl DnaSequence {
    pub fn parse(s: &str) -> Result<Self, KmerError> {
        Self::parse_line(s, 1)
    }

    fn parse_line(s: &str, line: usize) -> Result<Self, KmerError> {
        let upper = s.to_ascii_uppercase();
        if let Some((i, c)) = upper
            .char_indices()
            .find(|(_, c)| !matches!(c, 'A' | 'C' | 'G' | 'T'))
        {
            return Err(KmerError::InvalidBase {
                base: c,
                line,
                column: i + 1,
            });
        }
        Ok(Self(upper))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Kmer(String);

impl Kmer {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for Kmer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// All windows of length `k` with their start offsets.
pub fn extract_kmers(s: &DnaSequence, k: usize) -> Result<Vec<(Kmer, usize)>, KmerError> {
    if k == 0 {
        return Err(KmerError::BadK(k));
    }
    let bytes = s.as_str();
    if bytes.len() < k {
        return Ok(Vec::new());
    }
    Ok((0..=bytes.len() - k)
        .map(|i| (Kmer(bytes[i..i + k].to_owned()), i))
        .collect())
}

/// Newline-separated sequences, plus the raw bytes they came from.
#[derive(Debug, Clone)]
pub struct Corpus {
    source: Source,
    sequences: Vec<DnaSequence>,
    /// Byte offset of each sequence in the source.
    offsets: Vec<u64>,
}

impl Corpus {
    pub fn parse(text: &str) -> Result<Self, KmerError> {
        let (sequences, offsets) = parse_lines(text)?;
        Ok(Self {
            source: Source::Memory(Arc::new(text.as_bytes().to_vec())),
            sequences,
            offsets,
        })
    }

    /// Parses the file once for validation and the oracle; workloads read
    /// it again chunk by chunk.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, KmerError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let (sequences, offsets) = parse_lines(&text)?;
        Ok(Self {
            source: Source::File(path.to_owned()),
            sequences,
            offsets,
        })
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn sequences(&self) -> &[DnaSequence] {
        &self.sequences
    }

    pub fn total_windows(&self, k: usize) -> u64 {
        self.sequences
            .iter()
            .map(|s| (s.len() + 1).saturating_sub(k) as u64)
            .sum()
    }

    /// Every k-mer instance with its byte offset in the source, which is
    /// the token the distributed workloads give it.
    pub fn instances(&self, k: usize) -> Vec<(Kmer, u64)> {
        let mut out = Vec::new();
        for (s, &base) in self.sequences.iter().zip(&self.offsets) {
            if let Ok(ks) = extract_kmers(s, k) {
                out.extend(ks.into_iter().map(|(km, i)| (km, base + i as u64)));
            }
        }
        out
    }
}

fn parse_lines(text: &str) -> Result<(Vec<DnaSequence>, Vec<u64>), KmerError> {
    let mut seqs = Vec::new();
    let mut offsets = Vec::new();
    let mut at = 0u64;
    for (i, line) in text.split('\n').enumerate() {
        if !line.is_empty() {
            seqs.push(DnaSequence::parse_line(line, i + 1)?);
            offsets.push(at);
        }
        at += line.len() as u64 + 1;
    }
    Ok((seqs, offsets))
}

/// k-mer to count.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KmerHistogram {
    pub k: usize,
    pub counts: BTreeMap<String, u64>,
}

impl KmerHistogram {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: BTreeMap::new(),
        }
    }

    pub fn get(&self, kmer: &str) -> u64 {
        self.counts.get(kmer).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `{"k", "counts", "total_windows"}`; `serde_json` maps keep keys
    /// sorted.
    pub fn to_json(&self) -> Value {
        json!({
            "k": self.k,
            "counts": self.counts,
            "total_windows": self.total(),
        })
    }

    /// Keys whose count reaches `threshold`.
    pub fn at_least(&self, threshold: u64) -> Vec<&str> {
        self.counts
            .iter()
            .filter(|(_, c)| **c >= threshold)
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

/// Exact single-threaded count.
pub fn oracle_count(corpus: &Corpus, k: usize) -> KmerHistogram {
    let mut h = KmerHistogram::new(k);
    for s in corpus.sequences() {
        let b = s.as_str();
        if b.len() < k || k == 0 {
            continue;
        }
        for i in 0..=b.len() - k {
            *h.counts.entry(b[i..i + k].to_owned()).or_default() += 1;
        }
    }
    h
}

/// `true` when `reported` is a sound thresholded view of `truth`: exact
/// below `threshold`, at or above it exactly when the truth is, and never
/// above the truth.
pub fn threshold_sound(reported: &KmerHistogram, truth: &KmerHistogram, threshold: u64) -> bool {
    reported.counts.keys().all(|k| truth.counts.contains_key(k))
        && truth.counts.iter().all(|(kmer, &t)| {
            let r = reported.get(kmer);
            let exact_below = t >= threshold || r == t;
            let predicate = (r >= threshold) == (t >= threshold);
            exact_below && predicate && r <= t
        })
}
