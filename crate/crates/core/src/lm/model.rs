//! Interpolated Kneser-Ney estimation and backoff scoring.

use std::collections::HashMap;

use log::warn;

use super::counts::{CountTable, NGramCounts};
use super::vocab::{Vocab, BOS_ID};
use crate::corpus_io::Sentence;
use crate::error::{Error, Result};

/// Discount used when an order has no singleton counts.
pub const FALLBACK_DISCOUNT: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    /// ln P(w | h) for the stored n-gram `h w`.
    pub log_prob: f64,
    /// ln backoff weight when this n-gram is used as a context.
    pub backoff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    vocab: Vocab,
    /// `tables[k - 1]` holds the k-grams.
    tables: Vec<HashMap<Vec<u32>, Entry>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentenceScore {
    /// Natural log.
    pub total_log_prob: f64,
    /// Tokens plus the end-of-sentence event.
    pub scored_token_count: usize,
    /// Nats per scored token.
    pub cross_entropy: f64,
}

/// D = n1 / (n1 + 2 n2) over the count-of-counts of one order.
pub fn kn_discount(counts: impl Iterator<Item = u64>) -> Option<f64> {
    let (mut n1, mut n2) = (0u64, 0u64);
    for c in counts {
        match c {
            1 => n1 += 1,
            2 => n2 += 1,
            _ => {}
        }
    }
    if n1 == 0 {
        None
    } else {
        Some(n1 as f64 / (n1 + 2 * n2) as f64)
    }
}

/// Continuation counts for orders below the top: the number of distinct
/// left extensions, except for n-grams starting at `<s>` which have none and
/// keep their raw count.
fn adjusted_counts(counts: &NGramCounts) -> Vec<CountTable> {
    let n = counts.order;
    let mut adjusted: Vec<CountTable> = Vec::with_capacity(n);
    for k in 1..=n {
        if k == n {
            adjusted.push(counts.counts[k - 1].clone());
            continue;
        }
        let mut table: CountTable = counts.counts[k - 1]
            .iter()
            .filter(|(g, _)| g[0] == BOS_ID)
            .map(|(g, c)| (g.clone(), *c))
            .collect();
        for g in counts.counts[k].keys() {
            let suffix = &g[1..];
            if let Some(c) = table.get_mut(suffix) {
                *c += 1;
            } else {
                table.insert(suffix.to_vec(), 1);
            }
        }
        adjusted.push(table);
    }
    adjusted
}

/// Interpolated Kneser-Ney with one discount per order, written in backoff
/// form: every stored `h w` carries the full interpolated probability and
/// every context `h` carries `gamma(h) = D * N1+(h .) / total(h)`. The unigram
/// level interpolates with the uniform distribution over all predictable
/// tokens.
pub fn estimate_kn(counts: &NGramCounts) -> Result<NGramModel> {
    let n = counts.order;
    for k in 1..=n {
        if counts.counts[k - 1].is_empty() {
            return Err(Error::Config(format!(
                "no {k}-grams observed; the corpus is too short for order {n}"
            )));
        }
    }
    let adjusted = adjusted_counts(counts);
    let vocab = counts.vocab.clone();
    let event_count = vocab.event_ids().count() as f64;

    let mut tables: Vec<HashMap<Vec<u32>, Entry>> = Vec::with_capacity(n);
    for k in 1..=n {
        let used = &adjusted[k - 1];
        let discount = kn_discount(used.values().copied()).unwrap_or_else(|| {
            warn!("order {k}: no singleton counts, using discount {FALLBACK_DISCOUNT}");
            FALLBACK_DISCOUNT
        });

        // total and type count per context
        let mut contexts: HashMap<&[u32], (u64, u64)> = HashMap::new();
        for (g, c) in used {
            let e = contexts.entry(&g[..k - 1]).or_default();
            e.0 += c;
            e.1 += 1;
        }
        let gamma = |h: &[u32]| -> Option<f64> {
            contexts
                .get(h)
                .map(|(total, types)| discount * *types as f64 / *total as f64)
        };

        let mut table: HashMap<Vec<u32>, Entry> = HashMap::with_capacity(used.len());
        if k == 1 {
            let (total, _) = contexts[[].as_slice()];
            let g0 = gamma(&[]).unwrap();
            for id in vocab.event_ids() {
                let c = used.get([id].as_slice()).copied().unwrap_or(0) as f64;
                let p = (c - discount).max(0.0) / total as f64 + g0 / event_count;
                table.insert(vec![id], Entry { log_prob: p.ln(), backoff: None });
            }
            table.insert(
                vec![BOS_ID],
                Entry {
                    log_prob: f64::NEG_INFINITY,
                    backoff: None,
                },
            );
        } else {
            for (g, c) in used {
                let h = &g[..k - 1];
                let (total, _) = contexts[h];
                let lower_p = lookup(&tables, &g[1..]).exp();
                let p = (*c as f64 - discount).max(0.0) / total as f64 + gamma(h).unwrap() * lower_p;
                table.insert(g.clone(), Entry { log_prob: p.ln(), backoff: None });
            }
        }
        // contexts of this order are (k-1)-grams stored one level down
        if k > 1 {
            let below = &mut tables[k - 2];
            for (h, (total, types)) in &contexts {
                let g = discount * *types as f64 / *total as f64;
                if let Some(e) = below.get_mut(*h) {
                    e.backoff = Some(g.ln());
                }
            }
        }
        tables.push(table);
    }
    Ok(NGramModel { order: n, vocab, tables })
}

/// ln P(last | rest) by the standard backoff recursion over `tables`.
fn lookup(tables: &[HashMap<Vec<u32>, Entry>], ngram: &[u32]) -> f64 {
    let mut acc = 0.0;
    let last = ngram.len() - 1;
    let start_min = ngram.len().saturating_sub(tables.len());
    for start in start_min..=last {
        let g = &ngram[start..];
        if let Some(e) = tables[g.len() - 1].get(g) {
            return acc + e.log_prob;
        }
        let h = &ngram[start..last];
        if h.is_empty() {
            break;
        }
        if let Some(Entry { backoff: Some(b), .. }) = tables[h.len() - 1].get(h) {
            acc += b;
        }
    }
    // every predictable id has a unigram entry
    f64::NEG_INFINITY
}

impl NGramModel {
    pub(crate) fn from_parts(order: usize, vocab: Vocab, tables: Vec<HashMap<Vec<u32>, Entry>>) -> Self {
        NGramModel { order, vocab, tables }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn entries(&self, k: usize) -> &HashMap<Vec<u32>, Entry> {
        &self.tables[k - 1]
    }

    pub fn get(&self, ngram: &[u32]) -> Option<&Entry> {
        self.tables.get(ngram.len().wrapping_sub(1))?.get(ngram)
    }

    /// ln P(w | context); only the last `order - 1` context ids matter.
    pub fn log_prob(&self, context: &[u32], w: u32) -> f64 {
        let keep = context.len().min(self.order - 1);
        let mut ngram = context[context.len() - keep..].to_vec();
        ngram.push(w);
        lookup(&self.tables, &ngram)
    }

    /// Scores the ids of `<s> w1 .. wn </s>`; `<s>` is only context.
    pub fn score_padded(&self, ids: &[u32]) -> f64 {
        let mut total = 0.0;
        for i in 1..ids.len() {
            let start = (i + 1).saturating_sub(self.order);
            total += lookup(&self.tables, &ids[start..=i]);
        }
        total
    }

    pub fn sentence_logprob(&self, s: &Sentence) -> Result<SentenceScore> {
        if s.is_empty() {
            return Err(Error::EmptySentence);
        }
        let ids = self.vocab.encode_padded(s.tokens());
        let total_log_prob = self.score_padded(&ids);
        let scored_token_count = ids.len() - 1;
        Ok(SentenceScore {
            total_log_prob,
            scored_token_count,
            cross_entropy: -total_log_prob / scored_token_count as f64,
        })
    }

    /// Cross-entropy in nats per scored token.
    pub fn cross_entropy(&self, s: &Sentence) -> Result<f64> {
        Ok(self.sentence_logprob(s)?.cross_entropy)
    }

    /// exp of corpus cross-entropy (total log prob over total scored tokens).
    pub fn perplexity<'a, I>(&self, corpus: I) -> Result<f64>
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        let (mut lp, mut n) = (0.0, 0usize);
        for s in corpus {
            let score = self.sentence_logprob(s)?;
            lp += score.total_log_prob;
            n += score.scored_token_count;
        }
        if n == 0 {
            return Err(Error::EmptyCorpus);
        }
        Ok((-lp / n as f64).exp())
    }

    /// Sum of P(w | context) over every predictable token.
    pub fn context_mass(&self, context: &[u32]) -> f64 {
        self.vocab
            .event_ids()
            .map(|w| self.log_prob(context, w).exp())
            .sum()
    }

    /// Every stored context (an n-gram with a backoff weight), plus the
    /// empty context.
    pub fn contexts(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new()];
        for t in &self.tables {
            out.extend(t.iter().filter(|(_, e)| e.backoff.is_some()).map(|(g, _)| g.clone()));
        }
        out
    }
}
