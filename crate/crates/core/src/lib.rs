//! Corpus engineering and reranking for machine translation pipelines.
//!
//! Stages: bitext and monolingual filtering ([`filter`], [`langid`]),
//! n-gram language models ([`lm`]) and cross-entropy difference data
//! selection ([`select`]), synthetic/bitext mixing ([`mix`]), noisy channel
//! n-best reranking with random-search tuning ([`rerank`]), corpus BLEU
//! ([`bleu`]) and quote postprocessing ([`postprocess`]). [`pipeline`] chains
//! them from a single config file.

pub mod bleu;
pub mod corpus_io;
pub mod error;
pub mod filter;
pub mod langid;
pub mod lm;
pub mod mix;
pub mod pipeline;
pub mod postprocess;
pub mod rerank;
pub mod select;

pub use corpus_io::{FilterStats, Sentence, SentencePair};
pub use error::{Error, Result};

/// Version stamped into every JSON report.
pub const REPORT_SCHEMA_VERSION: u32 = 1;
