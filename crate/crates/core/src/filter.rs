//! Bitext and monolingual filtering: empty sides, sentence length,
//! source/target length ratio and language identification.
//!
//! Rules run in a fixed order and a pair is attributed to the first rule it
//! violates, so every dropped pair is counted exactly once.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus_io::{FilterStats, Sentence, SentencePair};
use crate::error::{Error, Result};
use crate::langid::LangIdModel;

pub const DEFAULT_MAX_TOKENS: usize = 250;
pub const DEFAULT_MAX_RATIO: f64 = 1.5;

/// Pairs handed to the worker pool per batch.
const CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Empty,
    Length,
    Ratio,
    Langid,
    LangidEmpty,
}

impl Rule {
    /// Evaluation order.
    pub const ORDER: [Rule; 5] = [
        Rule::Empty,
        Rule::Length,
        Rule::Ratio,
        Rule::Langid,
        Rule::LangidEmpty,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Empty => "empty",
            Rule::Length => "length",
            Rule::Ratio => "ratio",
            Rule::Langid => "langid",
            Rule::LangidEmpty => "langid-empty",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub max_tokens: usize,
    pub max_ratio: f64,
    pub source_lang: String,
    pub target_lang: String,
    pub langid_enabled: bool,
    /// Minimum classification margin; `None` accepts the argmax language.
    pub min_margin: Option<f64>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            max_tokens: DEFAULT_MAX_TOKENS,
            max_ratio: DEFAULT_MAX_RATIO,
            source_lang: "en".into(),
            target_lang: "de".into(),
            langid_enabled: true,
            min_margin: None,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be positive".into()));
        }
        if self.max_ratio.is_nan() || self.max_ratio < 1.0 {
            return Err(Error::Config(format!(
                "max_ratio must be >= 1.0, got {}",
                self.max_ratio
            )));
        }
        Ok(())
    }

    fn check_model(&self, model: Option<&LangIdModel>, langs: &[&str]) -> Result<()> {
        if !self.langid_enabled {
            return Ok(());
        }
        let model = model.ok_or_else(|| {
            Error::Config("language identification enabled but no model given".into())
        })?;
        for lang in langs {
            if !model.covers(lang) {
                return Err(Error::Config(format!(
                    "langid model does not cover language {lang:?} (has {:?})",
                    model.languages()
                )));
            }
        }
        Ok(())
    }
}

/// True when both sides have at most `max_tokens` tokens.
pub fn length_filter(pair: &SentencePair, max_tokens: usize) -> bool {
    pair.source.token_count() <= max_tokens && pair.target.token_count() <= max_tokens
}

/// True when `max(|src|, |tgt|) / min(|src|, |tgt|)` does not exceed
/// `max_ratio`. Both sides must be non-empty.
pub fn ratio_filter(pair: &SentencePair, max_ratio: f64) -> bool {
    let (a, b) = (pair.source.token_count(), pair.target.token_count());
    let (long, short) = if a >= b { (a, b) } else { (b, a) };
    debug_assert!(short > 0, "ratio_filter on an empty side");
    // long/short > r  <=>  long > r*short, without the division
    (long as f64) <= max_ratio * short as f64
}

fn langid_rule(
    sentence: &Sentence,
    expected: &str,
    model: &LangIdModel,
    min_margin: Option<f64>,
) -> Option<Rule> {
    match model.classify(sentence) {
        Err(_) => Some(Rule::LangidEmpty),
        Ok(c) if c.language != expected => Some(Rule::Langid),
        Ok(c) if min_margin.is_some_and(|m| c.margin < m) => Some(Rule::Langid),
        Ok(_) => None,
    }
}

/// First rule `pair` violates, or `None` when it is kept.
pub fn check_pair(
    pair: &SentencePair,
    cfg: &FilterConfig,
    model: Option<&LangIdModel>,
) -> Option<Rule> {
    if pair.source.is_empty() || pair.target.is_empty() {
        return Some(Rule::Empty);
    }
    if !length_filter(pair, cfg.max_tokens) {
        return Some(Rule::Length);
    }
    if !ratio_filter(pair, cfg.max_ratio) {
        return Some(Rule::Ratio);
    }
    if cfg.langid_enabled {
        let model = model.expect("langid model checked by caller");
        return langid_rule(&pair.source, &cfg.source_lang, model, cfg.min_margin)
            .or_else(|| langid_rule(&pair.target, &cfg.target_lang, model, cfg.min_margin));
    }
    None
}

pub fn check_mono(
    sentence: &Sentence,
    expected_lang: &str,
    cfg: &FilterConfig,
    model: Option<&LangIdModel>,
) -> Option<Rule> {
    if sentence.is_empty() {
        return Some(Rule::Empty);
    }
    if sentence.token_count() > cfg.max_tokens {
        return Some(Rule::Length);
    }
    if cfg.langid_enabled {
        let model = model.expect("langid model checked by caller");
        return langid_rule(sentence, expected_lang, model, cfg.min_margin);
    }
    None
}

/// Runs `check` over `items` in parallel batches and hands the kept items to
/// `emit` in input order.
fn run_filter<T, I, C, E>(items: I, check: C, mut emit: E) -> Result<FilterStats>
where
    T: Send + Sync,
    I: IntoIterator<Item = Result<T>>,
    C: Fn(&T) -> Option<Rule> + Sync,
    E: FnMut(T) -> Result<()>,
{
    let mut stats = FilterStats::default();
    let mut items = items.into_iter();
    let mut batch: Vec<T> = Vec::with_capacity(CHUNK);
    loop {
        batch.clear();
        for item in items.by_ref().take(CHUNK) {
            batch.push(item?);
        }
        if batch.is_empty() {
            return Ok(stats);
        }
        let verdicts: Vec<Option<Rule>> = batch.par_iter().map(&check).collect();
        for (item, verdict) in batch.drain(..).zip(verdicts) {
            match verdict {
                None => {
                    stats.record_kept();
                    emit(item)?;
                }
                Some(rule) => stats.record_drop(rule.as_str()),
            }
        }
    }
}

/// Streams `pairs` through the bitext rules, passing survivors to `emit`.
pub fn filter_bitext_into<I, E>(
    pairs: I,
    cfg: &FilterConfig,
    model: Option<&LangIdModel>,
    emit: E,
) -> Result<FilterStats>
where
    I: IntoIterator<Item = Result<SentencePair>>,
    E: FnMut(SentencePair) -> Result<()>,
{
    cfg.validate()?;
    cfg.check_model(model, &[&cfg.source_lang, &cfg.target_lang])?;
    run_filter(pairs, |p| check_pair(p, cfg, model), emit)
}

pub fn filter_bitext<I>(
    pairs: I,
    cfg: &FilterConfig,
    model: Option<&LangIdModel>,
) -> Result<(Vec<SentencePair>, FilterStats)>
where
    I: IntoIterator<Item = Result<SentencePair>>,
{
    let mut kept = Vec::new();
    let stats = filter_bitext_into(pairs, cfg, model, |p| {
        kept.push(p);
        Ok(())
    })?;
    Ok((kept, stats))
}

pub fn filter_mono_into<I, E>(
    sentences: I,
    expected_lang: &str,
    cfg: &FilterConfig,
    model: Option<&LangIdModel>,
    emit: E,
) -> Result<FilterStats>
where
    I: IntoIterator<Item = Result<Sentence>>,
    E: FnMut(Sentence) -> Result<()>,
{
    cfg.validate()?;
    cfg.check_model(model, &[expected_lang])?;
    run_filter(sentences, |s| check_mono(s, expected_lang, cfg, model), emit)
}

pub fn filter_mono<I>(
    sentences: I,
    expected_lang: &str,
    cfg: &FilterConfig,
    model: Option<&LangIdModel>,
) -> Result<(Vec<Sentence>, FilterStats)>
where
    I: IntoIterator<Item = Result<Sentence>>,
{
    let mut kept = Vec::new();
    let stats = filter_mono_into(sentences, expected_lang, cfg, model, |s| {
        kept.push(s);
        Ok(())
    })?;
    Ok((kept, stats))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: String,
    pub remaining: u64,
}

/// Cumulative "remaining after each rule" rows, in rule order, starting
/// from the unfiltered input.
pub fn stage_rows(stats: &FilterStats) -> Vec<StageRow> {
    let mut remaining = stats.input_count;
    let mut rows = vec![StageRow {
        stage: "no filter".into(),
        remaining,
    }];
    for rule in Rule::ORDER {
        remaining -= stats.dropped(rule.as_str());
        rows.push(StageRow {
            stage: format!("+ {} filter", rule.as_str()),
            remaining,
        });
    }
    rows
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterReport {
    pub schema_version: u32,
    pub config: FilterConfig,
    pub stats: FilterStats,
    pub rows: Vec<StageRow>,
}

impl FilterReport {
    pub fn new(config: FilterConfig, stats: FilterStats) -> Self {
        let rows = stage_rows(&stats);
        FilterReport {
            schema_version: crate::REPORT_SCHEMA_VERSION,
            config,
            stats,
            rows,
        }
    }
}
