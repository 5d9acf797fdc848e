//! Merge lattices, CRDT-backed global tables and a deterministic
//! multi-worker simulator, with k-mer counting and count-min sketch
//! workloads built on top.

pub mod dispenser;
pub mod hash;
pub mod kmer;
pub mod lattice;
pub mod runtime;
pub mod sketch;
pub mod tables;
