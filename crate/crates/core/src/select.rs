//! In-domain data selection by cross-entropy difference.
//!
//! A sentence scores `H_out(s) - H_in(s)`: the general-domain cross-entropy
//! minus the in-domain cross-entropy, both in nats per token. Higher means
//! more in-domain, and sentences scoring strictly above the cutoff are kept.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus_io::{LineWriter, Sentence};
use crate::error::{Error, Result};
use crate::lm::NGramModel;

pub const DEFAULT_CUTOFF: f64 = 0.01;
const BATCH: usize = 1 << 14;

#[derive(Debug, Clone, Copy)]
pub struct SelectionConfig<'a> {
    pub cutoff: f64,
    /// Trained on in-domain text.
    pub lm_in: &'a NGramModel,
    /// Trained on the general corpus being selected from.
    pub lm_out: &'a NGramModel,
}

impl<'a> SelectionConfig<'a> {
    pub fn new(lm_in: &'a NGramModel, lm_out: &'a NGramModel) -> Self {
        if !shared_vocab(lm_in, lm_out) {
            warn!("in-domain and general models have different vocabularies; scores mix <unk> policies");
        }
        SelectionConfig {
            cutoff: DEFAULT_CUTOFF,
            lm_in,
            lm_out,
        }
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn swapped(self) -> Self {
        SelectionConfig {
            cutoff: self.cutoff,
            lm_in: self.lm_out,
            lm_out: self.lm_in,
        }
    }
}

pub fn shared_vocab(a: &NGramModel, b: &NGramModel) -> bool {
    a.vocab() == b.vocab()
}

/// `H_out(s) - H_in(s)` in nats per token.
pub fn ml_score(cfg: &SelectionConfig, s: &Sentence) -> Result<f64> {
    let h_in = cfg.lm_in.cross_entropy(s)?;
    let h_out = cfg.lm_out.cross_entropy(s)?;
    Ok(h_out - h_in)
}

/// Fixed-edge histogram with underflow and overflow buckets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub low: f64,
    pub high: f64,
    pub bin_width: f64,
    pub underflow: u64,
    pub bins: Vec<u64>,
    pub overflow: u64,
}

impl Default for Histogram {
    fn default() -> Self {
        Histogram::new(-5.0, 5.0, 40)
    }
}

impl Histogram {
    pub fn new(low: f64, high: f64, bins: usize) -> Self {
        Histogram {
            low,
            high,
            bin_width: (high - low) / bins as f64,
            underflow: 0,
            bins: vec![0; bins],
            overflow: 0,
        }
    }

    pub fn add(&mut self, x: f64) {
        if x < self.low {
            self.underflow += 1;
        } else if x >= self.high {
            self.overflow += 1;
        } else {
            let last = self.bins.len() - 1;
            let i = ((x - self.low) / self.bin_width) as usize;
            self.bins[i.min(last)] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.underflow + self.overflow + self.bins.iter().sum::<u64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub schema_version: u32,
    pub cutoff: f64,
    pub target_fraction: Option<f64>,
    pub input_count: u64,
    pub selected_count: u64,
    pub fraction_selected: f64,
    pub shared_vocab: bool,
    pub histogram: Histogram,
}

/// Scores every sentence; parallel within batches, output in input order.
pub fn score_corpus<I>(corpus: I, cfg: &SelectionConfig) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = Result<Sentence>>,
{
    let mut scores = Vec::new();
    for_each_scored(corpus, cfg, |_, score| {
        scores.push(score);
        Ok(())
    })?;
    Ok(scores)
}

fn for_each_scored<I, F>(corpus: I, cfg: &SelectionConfig, mut f: F) -> Result<()>
where
    I: IntoIterator<Item = Result<Sentence>>,
    F: FnMut(Sentence, f64) -> Result<()>,
{
    let mut iter = corpus.into_iter();
    let mut batch = Vec::with_capacity(BATCH);
    loop {
        batch.clear();
        for s in iter.by_ref().take(BATCH) {
            batch.push(s?);
        }
        if batch.is_empty() {
            return Ok(());
        }
        let scores = batch
            .par_iter()
            .map(|s| ml_score(cfg, s))
            .collect::<Result<Vec<f64>>>()?;
        for (s, score) in batch.drain(..).zip(scores) {
            f(s, score)?;
        }
    }
}

fn report(cfg: &SelectionConfig, target_fraction: Option<f64>, histogram: Histogram, selected: u64) -> SelectionReport {
    let input_count = histogram.total();
    SelectionReport {
        schema_version: crate::REPORT_SCHEMA_VERSION,
        cutoff: cfg.cutoff,
        target_fraction,
        input_count,
        selected_count: selected,
        fraction_selected: if input_count == 0 {
            0.0
        } else {
            selected as f64 / input_count as f64
        },
        shared_vocab: shared_vocab(cfg.lm_in, cfg.lm_out),
        histogram,
    }
}

/// Streams `corpus`, passing sentences scoring above `cfg.cutoff` to `emit`.
pub fn select_into<I, E>(corpus: I, cfg: &SelectionConfig, mut emit: E) -> Result<SelectionReport>
where
    I: IntoIterator<Item = Result<Sentence>>,
    E: FnMut(Sentence, f64) -> Result<()>,
{
    let mut histogram = Histogram::default();
    let mut selected = 0u64;
    for_each_scored(corpus, cfg, |s, score| {
        histogram.add(score);
        if score > cfg.cutoff {
            selected += 1;
            emit(s, score)?;
        }
        Ok(())
    })?;
    Ok(report(cfg, None, histogram, selected))
}

pub fn select<I>(corpus: I, cfg: &SelectionConfig) -> Result<(Vec<Sentence>, SelectionReport)>
where
    I: IntoIterator<Item = Result<Sentence>>,
{
    let mut kept = Vec::new();
    let report = select_into(corpus, cfg, |s, _| {
        kept.push(s);
        Ok(())
    })?;
    Ok((kept, report))
}

/// Smallest cutoff from the observed scores such that the number of scores
/// strictly above it is as close as possible to `fraction * n` without
/// exceeding it.
pub fn cutoff_for_fraction(scores: &[f64], fraction: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("target fraction {fraction} outside [0, 1]")));
    }
    if scores.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let k = (fraction * sorted.len() as f64).round() as usize;
    if k >= sorted.len() {
        return Ok(sorted[sorted.len() - 1] - 1.0);
    }
    // everything strictly above sorted[k] is selected; ties at sorted[k] are not
    Ok(sorted[k])
}

/// Two passes: scores everything, picks the cutoff hitting `fraction`, then
/// streams the corpus again and keeps sentences above it.
pub fn select_fraction<F, I, E>(
    corpus: F,
    cfg: &SelectionConfig,
    fraction: f64,
    mut emit: E,
) -> Result<SelectionReport>
where
    F: Fn() -> Result<I>,
    I: Iterator<Item = Result<Sentence>>,
    E: FnMut(Sentence, f64) -> Result<()>,
{
    let scores = score_corpus(corpus()?, cfg)?;
    let cutoff = cutoff_for_fraction(&scores, fraction)?;
    let cfg = cfg.with_cutoff(cutoff);
    let mut histogram = Histogram::default();
    let mut selected = 0u64;
    let mut iter = corpus()?;
    for &score in &scores {
        let s = iter
            .next()
            .ok_or_else(|| Error::Config("corpus changed between passes".into()))??;
        histogram.add(score);
        if score > cutoff {
            selected += 1;
            emit(s, score)?;
        }
    }
    Ok(report(&cfg, Some(fraction), histogram, selected))
}

/// Writes `index<TAB>score` rows. Scores use the shortest exact decimal
/// form, so rereading them gives the same values.
pub fn score_dump<I>(corpus: I, cfg: &SelectionConfig, path: impl AsRef<Path>) -> Result<u64>
where
    I: IntoIterator<Item = Result<Sentence>>,
{
    let mut out = LineWriter::create(path)?;
    let mut index = 0usize;
    for_each_scored(corpus, cfg, |_, score| {
        let line = format!("{index}\t{score}");
        index += 1;
        out.write_line(&line)
    })?;
    out.finish()
}

pub fn read_score_dump(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut scores = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let (idx, score) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, i + 1, "expected index<TAB>score"))?;
        if idx.parse::<usize>().ok() != Some(i) {
            return Err(Error::parse(path, i + 1, format!("expected index {i}, found {idx:?}")));
        }
        let score = score
            .parse::<f64>()
            .map_err(|_| Error::parse(path, i + 1, format!("non-numeric score {score:?}")))?;
        scores.push(score);
    }
    Ok(scores)
}

/// Selection driven by a previously written score dump.
pub fn select_from_scores<I>(corpus: I, scores: &[f64], cutoff: f64) -> Result<Vec<Sentence>>
where
    I: IntoIterator<Item = Result<Sentence>>,
{
    let mut kept = Vec::new();
    let mut n = 0;
    for (s, score) in corpus.into_iter().zip(scores) {
        n += 1;
        let s = s?;
        if *score > cutoff {
            kept.push(s);
        }
    }
    if n != scores.len() {
        return Err(Error::LengthMismatch(n, scores.len()));
    }
    Ok(kept)
}
