//! Knowledge-graph-backed prompt orchestration for legal dispute analysis.
//!
//! Concepts are retrieved from a three-layer legal knowledge graph by four
//! fused strategies ([`retrieval`]), ranked into a knowledge background
//! with BM25+ and graph, precedent and jurisdiction signals
//! ([`relevance`]), assembled into a three-section prompt ([`prompt`]) and
//! sent through a generate, assess, adjust loop ([`quality`]) against a
//! pluggable completion provider ([`provider`]).

pub mod codes;
pub mod freshness;
pub mod graph;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod prompt;
pub mod provider;
pub mod quality;
pub mod relevance;
pub mod retrieval;
pub mod text;

pub use graph::{ConceptId, KnowledgeGraph, Layer, LegalConcept, Relation};
pub use par::Parallelism;
pub use pipeline::{ingest_corpus, run_query, QueryReport, RunConfig, Runtime};
pub use prompt::{Mode, PromptDocument, Toggle};
pub use quality::{QualityReport, QualityWeights};
pub use retrieval::{retrieve, FusionWeights, MatchParams, Query, RetrievalResult, TermStats};
