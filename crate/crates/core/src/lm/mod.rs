//! Backoff n-gram language models with Kneser-Ney smoothing.
//!
//! Log probabilities are natural logs internally; ARPA files use log10 and
//! are converted on import and export. Cross-entropy is in nats per token,
//! where the token count includes the end-of-sentence event.

mod arpa;
mod counts;
mod model;
mod vocab;

pub use arpa::{export_arpa, import_arpa, parse_arpa_str, to_arpa_string};
pub use counts::{count_ngrams, count_sentences, CountConfig, CountTable, NGramCounts, MAX_ORDER};
pub use model::{estimate_kn, kn_discount, Entry, NGramModel, SentenceScore, FALLBACK_DISCOUNT};
pub use vocab::{Vocab, BOS, BOS_ID, EOS, EOS_ID, UNK, UNK_ID};

use crate::corpus_io::Sentence;
use crate::error::Result;

/// Counts and estimates in one step.
pub fn train(corpus: &[Sentence], cfg: &CountConfig) -> Result<NGramModel> {
    estimate_kn(&count_sentences(corpus, cfg)?)
}
