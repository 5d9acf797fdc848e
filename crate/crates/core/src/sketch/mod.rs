//! Count-min sketch whose cells are sets of instance ids.
//!
//! A cell's count is the size of its id set, so inserting the same
//! instance twice changes nothing and sketches merge by cellwise union.
//! Two distributed layouts run on the simulator: [`design1_run`] splits
//! the columns into one range slab per worker and answers queries by
//! gathering the addressed cells, and [`design2_run`] keeps a full
//! replica on every worker and converges by gossip.

mod designs;

use std::f64::consts::E;

use serde_json::{json, Value};
use thiserror::Error;

use crate::hash::{hash_pair, hash_str};
use crate::kmer::{Corpus, KmerError};
use crate::lattice::{LSet, Lattice, LatticeError};
use crate::runtime::RuntimeError;
use crate::tables::TableError;

pub use designs::{
    column_plan, design1_program, design1_run, design2_program, design2_run, Design1Outcome,
    Design2Outcome,
};

#[derive(Debug, Error)]
pub enum SketchError {
    #[error("epsilon must be in (0, 1), got {0}")]
    Epsilon(f64),
    #[error("delta must be in (0, 1), got {0}")]
    Delta(f64),
    #[error("sketch needs h >= 1 and m >= 1, got h={h} m={m}")]
    Shape { h: usize, m: usize },
    #[error("expected {h} row seeds, got {got}")]
    SeedCount { h: usize, got: usize },
    #[error("row seeds must be pairwise distinct")]
    DuplicateSeeds,
    #[error("{m} columns cannot be split across {workers} workers")]
    Columns { m: usize, workers: usize },
    #[error(transparent)]
    Kmer(#[from] KmerError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Shape and hash seeds of a sketch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CmsParams {
    h: usize,
    m: usize,
    seeds: Vec<u64>,
}

impl CmsParams {
    pub fn new(h: usize, m: usize, seeds: Vec<u64>) -> Result<Self, SketchError> {
        if h == 0 || m == 0 {
            return Err(SketchError::Shape { h, m });
        }
        if seeds.len() != h {
            return Err(SketchError::SeedCount {
                h,
                got: seeds.len(),
            });
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != h {
            return Err(SketchError::DuplicateSeeds);
        }
        Ok(Self { h, m, seeds })
    }

    /// `h` rows with seeds derived from `base`.
    pub fn with_base_seed(h: usize, m: usize, base: u64) -> Result<Self, SketchError> {
        let mut seeds = Vec::with_capacity(h);
        let mut i = 0u64;
        while seeds.len() < h {
            let s = hash_pair(base, i);
            if !seeds.contains(&s) {
                seeds.push(s);
            }
            i += 1;
        }
        Self::new(h, m, seeds)
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    /// Column that row `row` maps `x` to.
    pub fn column(&self, row: usize, x: &str) -> usize {
        (hash_str(self.seeds[row], x) % self.m as u64) as usize
    }
}

/// `m = ceil(e / epsilon)`, `h = ceil(ln(1 / delta))`: with probability at
/// least `1 - delta` an estimate exceeds the truth by at most `epsilon * N`.
pub fn choose_params(epsilon: f64, delta: f64) -> Result<CmsParams, SketchError> {
    choose_params_seeded(epsilon, delta, 0)
}

pub fn choose_params_seeded(epsilon: f64, delta: f64, base: u64) -> Result<CmsParams, SketchError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SketchError::Epsilon(epsilon));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SketchError::Delta(delta));
    }
    let m = (E / epsilon).ceil() as usize;
    let h = ((1.0 / delta).ln().ceil() as usize).max(1);
    CmsParams::with_base_seed(h, m, base)
}

/// `h x m` grid of id sets, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchMatrix {
    params: CmsParams,
    cells: Vec<LSet<u64>>,
}

impl SketchMatrix {
    pub fn new(params: CmsParams) -> Self {
        let cells = vec![LSet::new(); params.h * params.m];
        Self { params, cells }
    }

    pub fn params(&self) -> &CmsParams {
        &self.params
    }

    pub fn cell(&self, row: usize, col: usize) -> &LSet<u64> {
        &self.cells[row * self.params.m + col]
    }

    /// Merges `ids` into one cell; returns whether it grew.
    pub fn merge_cell(&mut self, row: usize, col: usize, ids: &LSet<u64>) -> bool {
        let m = self.params.m;
        self.cells[row * m + col].merge_from(ids)
    }

    /// Adds `token` to the cell each row addresses for `x`.
    pub fn insert(&mut self, x: &str, token: u64) -> bool {
        let mut changed = false;
        for row in 0..self.params.h {
            let col = self.params.column(row, x);
            let m = self.params.m;
            changed |= self.cells[row * m + col].insert(token);
        }
        changed
    }

    /// Smallest addressed cell size; never below the true count.
    pub fn query(&self, x: &str) -> u64 {
        (0..self.params.h)
            .map(|row| self.cell(row, self.params.column(row, x)).len() as u64)
            .min()
            .unwrap_or(0)
    }

    pub fn row_sum(&self, row: usize) -> u64 {
        (0..self.params.m)
            .map(|c| self.cell(row, c).len() as u64)
            .sum()
    }

    /// Ids held across all cells, counting each cell separately.
    pub fn stored_ids(&self) -> u64 {
        self.cells.iter().map(|c| c.len() as u64).sum()
    }

    /// `{"h", "m", "seeds", "cells"}` with cells as row-major cardinalities.
    pub fn dump_json(&self) -> Value {
        let cells: Vec<usize> = self.cells.iter().map(LSet::len).collect();
        json!({
            "h": self.params.h,
            "m": self.params.m,
            "seeds": self.params.seeds,
            "cells": cells,
        })
    }
}

impl Lattice for SketchMatrix {
    fn bottom_like(&self) -> Self {
        Self::new(self.params.clone())
    }

    fn merge_from(&mut self, other: &Self) -> bool {
        if self.params != other.params {
            return false;
        }
        let mut changed = false;
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            changed |= a.merge_from(b);
        }
        changed
    }

    fn check_compatible(&self, other: &Self) -> Result<(), LatticeError> {
        if self.params == other.params {
            Ok(())
        } else {
            Err(LatticeError::ParamsMismatch {
                what: "sketch parameters",
            })
        }
    }

    fn is_bottom(&self) -> bool {
        self.cells.iter().all(LSet::is_empty)
    }
}

pub fn cms_insert(mut sk: SketchMatrix, x: &str, token: u64) -> SketchMatrix {
    sk.insert(x, token);
    sk
}

pub fn cms_query(sk: &SketchMatrix, x: &str) -> u64 {
    sk.query(x)
}

/// The sketch a single process builds by inserting every instance.
pub fn sequential_sketch(corpus: &Corpus, k: usize, params: &CmsParams) -> SketchMatrix {
    let mut sk = SketchMatrix::new(params.clone());
    for (kmer, token) in corpus.instances(k) {
        sk.insert(kmer.as_str(), token);
    }
    sk
}
