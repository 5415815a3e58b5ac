//! N-gram counting.
//!
//! Counting holds one hash table per order in memory. A table entry costs
//! the id vector (4 bytes per token plus 24 bytes of header) plus the count
//! and hash-table overhead, so memory grows with the number of distinct
//! n-grams, not with corpus length. Corpora are counted in batches; each batch
//! is split across worker threads into shard tables which are merged by
//! addition, so the result does not depend on the thread count.

use std::collections::HashMap;

use rayon::prelude::*;

use super::vocab::{Vocab, BOS_ID};
use crate::corpus_io::Sentence;
use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 6;
const BATCH: usize = 1 << 15;

pub type CountTable = HashMap<Vec<u32>, u64>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountConfig {
    pub order: usize,
    /// Tokens seen fewer times than this become `<unk>`.
    pub min_count: u64,
    /// Closed vocabulary shared between models; overrides `min_count`.
    pub fixed_vocab: Option<Vec<String>>,
}

impl Default for CountConfig {
    fn default() -> Self {
        CountConfig {
            order: 5,
            min_count: 1,
            fixed_vocab: None,
        }
    }
}

impl CountConfig {
    pub fn new(order: usize) -> Self {
        CountConfig {
            order,
            ..CountConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(1..=MAX_ORDER).contains(&self.order) {
            return Err(Error::Config(format!(
                "n-gram order must be in 1..={MAX_ORDER}, got {}",
                self.order
            )));
        }
        if self.min_count == 0 {
            return Err(Error::Config("min_count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramCounts {
    pub order: usize,
    pub vocab: Vocab,
    /// `counts[k - 1]` holds the k-grams. The lone `<s>` unigram is never
    /// counted.
    pub counts: Vec<CountTable>,
}

impl NGramCounts {
    pub fn empty(order: usize, vocab: Vocab) -> Self {
        NGramCounts {
            order,
            vocab,
            counts: vec![CountTable::new(); order],
        }
    }

    pub fn get(&self, ngram: &[u32]) -> u64 {
        self.counts
            .get(ngram.len().wrapping_sub(1))
            .and_then(|t| t.get(ngram))
            .copied()
            .unwrap_or(0)
    }

    /// Adds the n-grams of one `<s> .. </s>` padded id sequence.
    pub fn add_padded(&mut self, ids: &[u32]) {
        for k in 1..=self.order.min(ids.len()) {
            let table = &mut self.counts[k - 1];
            for window in ids.windows(k) {
                if k == 1 && window[0] == BOS_ID {
                    continue;
                }
                if let Some(c) = table.get_mut(window) {
                    *c += 1;
                } else {
                    table.insert(window.to_vec(), 1);
                }
            }
        }
    }

    /// Adds another shard's counts. Both must share the vocabulary.
    pub fn merge(&mut self, other: NGramCounts) {
        debug_assert_eq!(self.order, other.order);
        for (mine, theirs) in self.counts.iter_mut().zip(other.counts) {
            if mine.len() < theirs.len() {
                let small = std::mem::replace(mine, theirs);
                for (g, c) in small {
                    *mine.entry(g).or_default() += c;
                }
            } else {
                for (g, c) in theirs {
                    *mine.entry(g).or_default() += c;
                }
            }
        }
    }

    pub fn total_sentences(&self) -> u64 {
        // every sentence contributes one `</s>`
        self.counts[0]
            .get([super::vocab::EOS_ID].as_slice())
            .copied()
            .unwrap_or(0)
    }
}

fn count_batch(batch: &[Sentence], order: usize, vocab: &Vocab) -> NGramCounts {
    batch
        .par_chunks(1024)
        .map(|chunk| {
            let mut c = NGramCounts::empty(order, vocab.clone());
            for s in chunk {
                c.add_padded(&vocab.encode_padded(s.tokens()));
            }
            c
        })
        .reduce_with(|mut a, b| {
            a.merge(b);
            a
        })
        .unwrap_or_else(|| NGramCounts::empty(order, vocab.clone()))
}

/// Counts n-grams of orders `1..=cfg.order` over `<s>`/`</s>` padded
/// sentences.
///
/// `corpus` is called once for the vocabulary pass and once for counting
/// (only once with a fixed vocabulary), so it must yield the same sentences
/// each time.
pub fn count_ngrams<F, I>(corpus: F, cfg: &CountConfig) -> Result<NGramCounts>
where
    F: Fn() -> Result<I>,
    I: Iterator<Item = Result<Sentence>>,
{
    cfg.validate()?;
    let vocab = match &cfg.fixed_vocab {
        Some(tokens) => Vocab::from_tokens(tokens),
        None => {
            let mut unigrams: HashMap<String, u64> = HashMap::new();
            let mut any = false;
            for s in corpus()? {
                let s = s?;
                any = true;
                for t in s.tokens() {
                    if let Some(c) = unigrams.get_mut(t) {
                        *c += 1;
                    } else {
                        unigrams.insert(t.to_string(), 1);
                    }
                }
            }
            if !any {
                return Err(Error::EmptyCorpus);
            }
            Vocab::from_tokens(
                unigrams
                    .into_iter()
                    .filter(|(_, c)| *c >= cfg.min_count)
                    .map(|(t, _)| t),
            )
        }
    };

    let mut total = NGramCounts::empty(cfg.order, vocab);
    let mut batch = Vec::with_capacity(BATCH);
    let mut sentences = 0usize;
    let mut iter = corpus()?;
    loop {
        batch.clear();
        for s in iter.by_ref().take(BATCH) {
            batch.push(s?);
        }
        if batch.is_empty() {
            break;
        }
        sentences += batch.len();
        let shard = count_batch(&batch, cfg.order, &total.vocab);
        total.merge(shard);
    }
    if sentences == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(total)
}

/// Convenience wrapper over an in-memory corpus.
pub fn count_sentences(corpus: &[Sentence], cfg: &CountConfig) -> Result<NGramCounts> {
    count_ngrams(|| Ok(corpus.iter().cloned().map(Ok)), cfg)
}
