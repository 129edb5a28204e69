//! Forensic knowledge-graph pipeline for Android SQLite evidence.

pub mod consolidate;
pub mod entity;
pub mod evaluate;
pub mod fixtures;
pub mod flatten;
pub mod graph;
pub mod ingest;
pub mod pipeline;
pub mod refine;
pub mod service;
pub mod store;
