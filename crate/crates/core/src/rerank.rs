//! Noisy channel reranking of n-best lists.
//!
//! Each hypothesis `y` of a source `x` is scored as
//!
//! ```text
//! log P(y|x) + lambda1 * log P(x|y) + lambda2 * log P(y) + length_penalty * |y|
//! ```
//!
//! where `|y|` is the whitespace token count. The three log-scores come from
//! the n-best file as produced upstream; nothing here renormalizes them.
//! Weights are tuned by uniform random search against corpus BLEU.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bleu::{segment_stats, BleuStats, Tokenizer};
use crate::corpus_io::Sentence;
use crate::error::{Error, Result};
use crate::mix::{seeded_rng, GENERATOR};

/// Beam size the n-best lists are expected to come from.
pub const EXPECTED_NBEST_SIZE: usize = 50;
pub const DEFAULT_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub source_id: u64,
    pub text: Sentence,
    /// log P(y|x)
    pub forward_score: f64,
    /// log P(x|y)
    pub channel_score: f64,
    /// log P(y)
    pub lm_score: f64,
}

impl Hypothesis {
    pub fn new(source_id: u64, text: &str, forward: f64, channel: f64, lm: f64) -> Result<Self> {
        if ![forward, channel, lm].iter().all(|s| s.is_finite()) {
            return Err(Error::Config(format!("non-finite score in hypothesis {text:?}")));
        }
        Ok(Hypothesis {
            source_id,
            text: Sentence::new(text)?,
            forward_score: forward,
            channel_score: channel,
            lm_score: lm,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NBestList {
    source_id: u64,
    /// Not carried by the n-best file format.
    source_text: Option<Sentence>,
    hypotheses: Vec<Hypothesis>,
}

impl NBestList {
    pub fn new(hypotheses: Vec<Hypothesis>) -> Result<Self> {
        let first = hypotheses
            .first()
            .ok_or_else(|| Error::Config("n-best list must not be empty".into()))?;
        let source_id = first.source_id;
        if let Some(h) = hypotheses.iter().find(|h| h.source_id != source_id) {
            return Err(Error::Config(format!(
                "hypothesis for source {} in list for source {source_id}",
                h.source_id
            )));
        }
        Ok(NBestList {
            source_id,
            source_text: None,
            hypotheses,
        })
    }

    pub fn with_source_text(mut self, text: Sentence) -> Self {
        self.source_text = Some(text);
        self
    }

    pub fn source_id(&self) -> u64 {
        self.source_id
    }

    pub fn source_text(&self) -> Option<&Sentence> {
        self.source_text.as_ref()
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningInfo {
    pub dataset: Option<String>,
    pub dev_bleu: f64,
    pub seed: u64,
    pub n_samples: usize,
    pub generator: String,
    /// 0-based draw that won.
    pub draw_index: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RerankWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub length_penalty: f64,
    #[serde(flatten, skip_serializing_if = "Option::is_none", default)]
    pub tuned_on: Option<TuningInfo>,
}

impl RerankWeights {
    pub fn new(lambda1: f64, lambda2: f64, length_penalty: f64) -> Self {
        RerankWeights {
            lambda1,
            lambda2,
            length_penalty,
            tuned_on: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub fn combined_score(h: &Hypothesis, w: &RerankWeights) -> f64 {
    h.forward_score
        + w.lambda1 * h.channel_score
        + w.lambda2 * h.lm_score
        + w.length_penalty * h.text.token_count() as f64
}

/// Index of the best hypothesis; the earliest wins ties.
pub fn rerank_index(list: &NBestList, w: &RerankWeights) -> usize {
    let mut best = 0;
    let mut best_score = combined_score(&list.hypotheses[0], w);
    for (i, h) in list.hypotheses.iter().enumerate().skip(1) {
        let s = combined_score(h, w);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

pub fn rerank<'a>(list: &'a NBestList, w: &RerankWeights) -> &'a Hypothesis {
    &list.hypotheses[rerank_index(list, w)]
}

pub fn rerank_all<'a>(lists: &'a [NBestList], w: &RerankWeights) -> Vec<&'a Hypothesis> {
    lists.par_iter().map(|l| rerank(l, w)).collect()
}

/// Half-open sampling intervals `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRanges {
    pub lambda1: (f64, f64),
    pub lambda2: (f64, f64),
    pub length_penalty: (f64, f64),
}

impl Default for SearchRanges {
    fn default() -> Self {
        SearchRanges {
            lambda1: (0.0, 2.0),
            lambda2: (0.0, 2.0),
            length_penalty: (0.0, 1.0),
        }
    }
}

impl SearchRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("length_penalty", self.length_penalty),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("{name} range [{lo}, {hi}) is empty")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub ranges: SearchRanges,
    pub n_samples: usize,
    pub seed: u64,
    pub tokenizer: Tokenizer,
    pub dataset: Option<String>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            ranges: SearchRanges::default(),
            n_samples: DEFAULT_SAMPLES,
            seed: 7,
            tokenizer: Tokenizer::Thirteen,
            dataset: None,
        }
    }
}

/// The `n` weight triples drawn for `seed`, in draw order.
pub fn sample_weights(ranges: &SearchRanges, n: usize, seed: u64) -> Vec<RerankWeights> {
    let mut rng = seeded_rng(seed);
    (0..n)
        .map(|_| {
            let l1 = rng.gen_range(ranges.lambda1.0..ranges.lambda1.1);
            let l2 = rng.gen_range(ranges.lambda2.0..ranges.lambda2.1);
            let lp = rng.gen_range(ranges.length_penalty.0..ranges.length_penalty.1);
            RerankWeights::new(l1, l2, lp)
        })
        .collect()
}

/// Per-hypothesis BLEU statistics against the list's reference.
fn hypothesis_stats<R: AsRef<str> + Sync>(
    dev: &[NBestList],
    refs: &[R],
    tokenizer: Tokenizer,
) -> Vec<Vec<BleuStats>> {
    dev.par_iter()
        .zip(refs.par_iter())
        .map(|(list, r)| {
            let r = tokenizer.tokenize(r.as_ref().trim_end());
            list.hypotheses
                .iter()
                .map(|h| segment_stats(&tokenizer.tokenize(h.text.text().trim_end()), &r))
                .collect()
        })
        .collect()
}

/// Random search over `cfg.ranges`. Candidates are scored in parallel; the
/// best corpus BLEU wins and ties go to the earliest draw, so the result
/// does not depend on the thread count.
pub fn tune<R: AsRef<str> + Sync>(dev: &[NBestList], refs: &[R], cfg: &TuneConfig) -> Result<RerankWeights> {
    if dev.len() != refs.len() {
        return Err(Error::LengthMismatch(dev.len(), refs.len()));
    }
    if dev.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if cfg.n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    cfg.ranges.validate()?;

    let stats = hypothesis_stats(dev, refs, cfg.tokenizer);
    let candidates = sample_weights(&cfg.ranges, cfg.n_samples, cfg.seed);
    let (best_bleu, best_index) = candidates
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let total = dev
                .iter()
                .zip(&stats)
                .fold(BleuStats::default(), |acc, (list, s)| acc + s[rerank_index(list, w)]);
            (total.score().score, i)
        })
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX),
            |a, b| {
                if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            },
        );

    let mut best = candidates[best_index].clone();
    best.tuned_on = Some(TuningInfo {
        dataset: cfg.dataset.clone(),
        dev_bleu: best_bleu,
        seed: cfg.seed,
        n_samples: cfg.n_samples,
        generator: GENERATOR.to_string(),
        draw_index: best_index,
    });
    Ok(best)
}

pub fn nbest_to_string(lists: &[NBestList]) -> Result<String> {
    let mut out = String::new();
    let mut last: Option<u64> = None;
    for list in lists {
        if last.is_some_and(|l| l >= list.source_id) {
            return Err(Error::Config(format!(
                "n-best lists must have strictly ascending source ids, found {} after {}",
                list.source_id,
                last.unwrap()
            )));
        }
        last = Some(list.source_id);
        for h in &list.hypotheses {
            if h.text.text().contains('\t') {
                return Err(Error::InvalidSentence(format!("tab in hypothesis {:?}", h.text.text())));
            }
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                h.source_id,
                h.text.text(),
                h.forward_score,
                h.channel_score,
                h.lm_score
            )
            .unwrap();
        }
    }
    Ok(out)
}

pub fn write_nbest(lists: &[NBestList], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, nbest_to_string(lists)?).map_err(|e| Error::io(path, e))
}

pub fn parse_nbest(text: &str, path: &Path) -> Result<Vec<NBestList>> {
    let err = |line: usize, msg: String| Error::parse(path, line, msg);
    let mut lists = Vec::new();
    let mut current: Vec<Hypothesis> = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(err(n, format!("expected 5 tab-separated fields, found {}", fields.len())));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| err(n, format!("non-numeric source_id {:?}", fields[0])))?;
        let score = |k: usize, name: &str| -> Result<f64> {
            let v: f64 = fields[k]
                .parse()
                .map_err(|_| err(n, format!("non-numeric {name} score {:?}", fields[k])))?;
            if !v.is_finite() {
                return Err(err(n, format!("non-finite {name} score")));
            }
            Ok(v)
        };
        let h = Hypothesis {
            source_id: id,
            text: Sentence::new(fields[1]).map_err(|e| err(n, e.to_string()))?,
            forward_score: score(2, "forward")?,
            channel_score: score(3, "channel")?,
            lm_score: score(4, "lm")?,
        };
        match current.last() {
            Some(prev) if prev.source_id == id => {}
            prev => {
                if seen.contains(&id) {
                    return Err(err(n, format!("non-contiguous source_id {id}")));
                }
                if let Some(prev) = prev {
                    if id < prev.source_id {
                        return Err(err(n, format!("source_id {id} after {} is not ascending", prev.source_id)));
                    }
                    lists.push(NBestList::new(std::mem::take(&mut current))?);
                }
                seen.insert(id);
            }
        }
        current.push(h);
    }
    if current.is_empty() {
        return Err(err(1, "empty n-best file".into()));
    }
    lists.push(NBestList::new(current)?);
    Ok(lists)
}

pub fn read_nbest(path: impl AsRef<Path>) -> Result<Vec<NBestList>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_nbest(&text, path)
}
