//! Case-sensitive corpus BLEU-4 against a single reference, with `exp`
//! smoothing and the `13a` / `intl` tokenizers.
//!
//! Tokenizer rules (applied in order, then whitespace split):
//!
//! `13a`
//! 1. drop `<skipped>`, join `-\n`, turn `\n` into a space, unescape
//!    `&quot; &amp; &lt; &gt;`
//! 2. pad the text with one space on each side
//! 3. isolate every ASCII char in `{|}~ [\]^_` `` ` `` ` !"#$%& ()*+ :;<=>?@ /`
//! 4. split `.` and `,` unless preceded by a digit, then unless followed by one
//! 5. split `-` after a digit
//!
//! `intl`
//! 1. split a punctuation char (`\p{P}`) from a preceding non-digit
//! 2. split a punctuation char from a following non-digit
//! 3. isolate every symbol char (`\p{S}`)
//!
//! Smoothing: an order whose match count is zero gets precision
//! `1 / (2^k * total)` where `k` counts the zero-match orders so far. An
//! order with no hypothesis n-grams at all has precision zero, which makes
//! the score zero.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Tokenizer {
    #[default]
    #[serde(rename = "13a")]
    Thirteen,
    #[serde(rename = "intl")]
    Intl,
}

impl Tokenizer {
    pub fn name(self) -> &'static str {
        match self {
            Tokenizer::Thirteen => "13a",
            Tokenizer::Intl => "intl",
        }
    }

    pub fn tokenize(self, text: &str) -> Vec<String> {
        match self {
            Tokenizer::Thirteen => tokenize_13a(text),
            Tokenizer::Intl => tokenize_intl(text),
        }
    }
}

impl std::str::FromStr for Tokenizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "13a" => Ok(Tokenizer::Thirteen),
            "intl" => Ok(Tokenizer::Intl),
            other => Err(Error::Config(format!("unknown tokenizer {other:?} (13a|intl)"))),
        }
    }
}

struct Rules13a {
    symbols: Regex,
    period_comma_before: Regex,
    period_comma_after: Regex,
    dash: Regex,
}

fn rules_13a() -> &'static Rules13a {
    static RULES: OnceLock<Rules13a> = OnceLock::new();
    RULES.get_or_init(|| Rules13a {
        symbols: Regex::new(r"([\{-~\[-`\x20-&\(-\+:-@/])").unwrap(),
        period_comma_before: Regex::new(r"([^0-9])([\.,])").unwrap(),
        period_comma_after: Regex::new(r"([\.,])([^0-9])").unwrap(),
        dash: Regex::new(r"([0-9])(-)").unwrap(),
    })
}

pub fn tokenize_13a(text: &str) -> Vec<String> {
    let r = rules_13a();
    let norm = text
        .replace("<skipped>", "")
        .replace("-\n", "")
        .replace('\n', " ")
        .replace("&quot;", "\"")
        .replace("&amp;", "&")
        .replace("&lt;", "<")
        .replace("&gt;", ">");
    let norm = format!(" {norm} ");
    let norm = r.symbols.replace_all(&norm, " $1 ");
    let norm = r.period_comma_before.replace_all(&norm, "$1 $2 ");
    let norm = r.period_comma_after.replace_all(&norm, " $1 $2");
    let norm = r.dash.replace_all(&norm, "$1 $2 ");
    norm.split_whitespace().map(str::to_string).collect()
}

struct RulesIntl {
    nondigit_punct: Regex,
    punct_nondigit: Regex,
    symbol: Regex,
}

fn rules_intl() -> &'static RulesIntl {
    static RULES: OnceLock<RulesIntl> = OnceLock::new();
    RULES.get_or_init(|| RulesIntl {
        nondigit_punct: Regex::new(r"([^\d])(\p{P})").unwrap(),
        punct_nondigit: Regex::new(r"(\p{P})([^\d])").unwrap(),
        symbol: Regex::new(r"(\p{S})").unwrap(),
    })
}

pub fn tokenize_intl(text: &str) -> Vec<String> {
    let r = rules_intl();
    let norm = r.nondigit_punct.replace_all(text, "$1 $2 ");
    let norm = r.punct_nondigit.replace_all(&norm, " $1 $2");
    let norm = r.symbol.replace_all(&norm, " $1 ");
    norm.split_whitespace().map(str::to_string).collect()
}

/// Sufficient statistics; sums over segments give corpus statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub correct: [u64; MAX_ORDER],
    pub total: [u64; MAX_ORDER],
    pub hyp_length: u64,
    pub ref_length: u64,
}

impl std::ops::AddAssign for BleuStats {
    fn add_assign(&mut self, o: BleuStats) {
        for n in 0..MAX_ORDER {
            self.correct[n] += o.correct[n];
            self.total[n] += o.total[n];
        }
        self.hyp_length += o.hyp_length;
        self.ref_length += o.ref_length;
    }
}

impl std::ops::Add for BleuStats {
    type Output = BleuStats;

    fn add(mut self, o: BleuStats) -> BleuStats {
        self += o;
        self
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S]) -> HashMap<(usize, Vec<&str>), u64> {
    let mut counts = HashMap::new();
    for n in 1..=MAX_ORDER {
        for w in tokens.windows(n) {
            let key = (n, w.iter().map(AsRef::as_ref).collect::<Vec<&str>>());
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches of one tokenized segment pair.
pub fn segment_stats<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> BleuStats {
    let hyp_counts = ngram_counts(hyp);
    let ref_counts = ngram_counts(reference);
    let mut stats = BleuStats {
        hyp_length: hyp.len() as u64,
        ref_length: reference.len() as u64,
        ..BleuStats::default()
    };
    for ((n, gram), c) in &hyp_counts {
        let r = ref_counts.get(&(*n, gram.clone())).copied().unwrap_or(0);
        stats.correct[n - 1] += (*c).min(r);
        stats.total[n - 1] += c;
    }
    stats
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    /// 0 to 100.
    pub score: f64,
    /// Smoothed precisions, 0 to 1.
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_length: u64,
    pub ref_length: u64,
    pub stats: BleuStats,
}

impl BleuStats {
    pub fn score(&self) -> BleuScore {
        let mut precisions = [0.0; MAX_ORDER];
        let mut smooth = 1.0;
        for n in 0..MAX_ORDER {
            if self.total[n] == 0 {
                break;
            }
            precisions[n] = if self.correct[n] == 0 {
                smooth *= 2.0;
                1.0 / (smooth * self.total[n] as f64)
            } else {
                self.correct[n] as f64 / self.total[n] as f64
            };
        }
        let brevity_penalty = if self.hyp_length >= self.ref_length {
            1.0
        } else if self.hyp_length == 0 {
            0.0
        } else {
            (1.0 - self.ref_length as f64 / self.hyp_length as f64).exp()
        };
        let score = if precisions.contains(&0.0) {
            0.0
        } else {
            let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
            100.0 * brevity_penalty * mean_log.exp()
        };
        BleuScore {
            score,
            precisions,
            brevity_penalty,
            hyp_length: self.hyp_length,
            ref_length: self.ref_length,
            stats: *self,
        }
    }
}

/// Corpus statistics, one tokenized segment pair at a time in parallel.
pub fn corpus_stats<H, R>(hyps: &[H], refs: &[R], tokenizer: Tokenizer) -> Result<BleuStats>
where
    H: AsRef<str> + Sync,
    R: AsRef<str> + Sync,
{
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch(hyps.len(), refs.len()));
    }
    if hyps.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(hyps
        .par_iter()
        .zip(refs.par_iter())
        .map(|(h, r)| {
            let h = tokenizer.tokenize(h.as_ref().trim_end());
            let r = tokenizer.tokenize(r.as_ref().trim_end());
            segment_stats(&h, &r)
        })
        .reduce(BleuStats::default, |a, b| a + b))
}

pub fn corpus_bleu<H, R>(hyps: &[H], refs: &[R], tokenizer: Tokenizer) -> Result<BleuScore>
where
    H: AsRef<str> + Sync,
    R: AsRef<str> + Sync,
{
    let stats = corpus_stats(hyps, refs, tokenizer)?;
    if stats.hyp_length == 0 {
        return Err(Error::Config("every hypothesis is empty".into()));
    }
    Ok(stats.score())
}

/// Metric signature for reports.
pub fn signature(tokenizer: Tokenizer) -> String {
    format!("BLEU+case.mixed+numrefs.1+smooth.exp+tok.{}", tokenizer.name())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    pub schema_version: u32,
    pub signature: String,
    #[serde(flatten)]
    pub bleu: BleuScore,
}

impl BleuReport {
    pub fn new(bleu: BleuScore, tokenizer: Tokenizer) -> Self {
        BleuReport {
            schema_version: crate::REPORT_SCHEMA_VERSION,
            signature: signature(tokenizer),
            bleu,
        }
    }
}
