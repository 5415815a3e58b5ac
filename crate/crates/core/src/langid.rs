//! Character n-gram naive Bayes language identifier.
//!
//! Features are the character n-grams (orders `1..=order`) of every
//! whitespace token padded with one space on each side. Each language is a
//! multinomial over the closed event space made of every n-gram seen in
//! training (any language) plus one bucket for unseen n-grams, estimated with
//! add-one smoothing.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus_io::Sentence;
use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 3;
const MAGIC: &str = "#langid-model v1";
const UNSEEN_KEY: &str = "<unseen>";

#[derive(Debug, Clone, PartialEq)]
pub struct LangIdModel {
    order: usize,
    languages: Vec<String>,
    /// Natural-log priors, indexed like `languages`.
    priors: Vec<f64>,
    /// n-gram -> natural-log probability per language.
    table: HashMap<String, Vec<f64>>,
    unseen: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub language: String,
    /// Best score minus second-best score (log domain).
    pub margin: f64,
}

/// Calls `f` on every feature n-gram of `text`.
pub fn for_each_feature(text: &str, order: usize, mut f: impl FnMut(&str)) {
    let mut padded = String::new();
    let mut bounds: Vec<usize> = Vec::new();
    for token in text.split_whitespace() {
        padded.clear();
        padded.push(' ');
        padded.push_str(token);
        padded.push(' ');
        bounds.clear();
        bounds.extend(padded.char_indices().map(|(i, _)| i));
        bounds.push(padded.len());
        let chars = bounds.len() - 1;
        for n in 1..=order.min(chars) {
            for start in 0..=chars - n {
                f(&padded[bounds[start]..bounds[start + n]]);
            }
        }
    }
}

impl LangIdModel {
    /// Trains one multinomial per language. Priors follow the number of
    /// training sentences.
    pub fn train<I, S>(corpora: I, order: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (String, S)>,
        S: IntoIterator<Item = Sentence>,
    {
        if order == 0 {
            return Err(Error::Config("langid order must be at least 1".into()));
        }
        let mut per_lang: BTreeMap<String, (u64, HashMap<String, u64>)> = BTreeMap::new();
        for (lang, sentences) in corpora {
            let entry = per_lang.entry(lang).or_default();
            for s in sentences {
                entry.0 += 1;
                for_each_feature(s.text(), order, |g| {
                    if let Some(c) = entry.1.get_mut(g) {
                        *c += 1;
                    } else {
                        entry.1.insert(g.to_string(), 1);
                    }
                });
            }
        }
        if per_lang.len() < 2 {
            return Err(Error::Config(format!(
                "language identification needs at least 2 languages, got {}",
                per_lang.len()
            )));
        }
        if let Some((lang, _)) = per_lang.iter().find(|(_, (n, _))| *n == 0) {
            return Err(Error::Config(format!("empty training corpus for language {lang}")));
        }

        let languages: Vec<String> = per_lang.keys().cloned().collect();
        let total_sentences: u64 = per_lang.values().map(|(n, _)| n).sum();
        let priors = per_lang
            .values()
            .map(|(n, _)| (*n as f64 / total_sentences as f64).ln())
            .collect();

        let mut events: Vec<&String> = per_lang.values().flat_map(|(_, c)| c.keys()).collect();
        events.sort_unstable();
        events.dedup();
        let event_space = events.len() as f64 + 1.0;

        let denominators: Vec<f64> = per_lang
            .values()
            .map(|(_, counts)| counts.values().sum::<u64>() as f64 + event_space)
            .collect();
        let unseen = denominators.iter().map(|d| (1.0 / d).ln()).collect();
        let table = events
            .iter()
            .map(|g| {
                let probs = per_lang
                    .values()
                    .zip(&denominators)
                    .map(|((_, counts), d)| {
                        let c = counts.get(*g).copied().unwrap_or(0) as f64;
                        ((c + 1.0) / d).ln()
                    })
                    .collect();
                ((*g).clone(), probs)
            })
            .collect();

        Ok(LangIdModel {
            order,
            languages,
            priors,
            table,
            unseen,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn covers(&self, lang: &str) -> bool {
        self.languages.iter().any(|l| l == lang)
    }

    pub fn log_prior(&self, lang: &str) -> Option<f64> {
        let i = self.languages.iter().position(|l| l == lang)?;
        Some(self.priors[i])
    }

    /// Log probability of one feature under `lang`.
    pub fn feature_log_prob(&self, lang: &str, ngram: &str) -> Option<f64> {
        let i = self.languages.iter().position(|l| l == lang)?;
        Some(self.table.get(ngram).map_or(self.unseen[i], |p| p[i]))
    }

    /// Every event of the closed space, with the unseen bucket last.
    pub fn event_log_probs(&self, lang: &str) -> Option<Vec<f64>> {
        let i = self.languages.iter().position(|l| l == lang)?;
        let mut out: Vec<f64> = self.table.values().map(|p| p[i]).collect();
        out.push(self.unseen[i]);
        Some(out)
    }

    /// Joint log score (prior plus feature log probabilities) per language.
    pub fn scores(&self, text: &str) -> Vec<f64> {
        let mut scores = self.priors.clone();
        for_each_feature(text, self.order, |g| {
            let probs = self.table.get(g).unwrap_or(&self.unseen);
            for (s, p) in scores.iter_mut().zip(probs) {
                *s += p;
            }
        });
        scores
    }

    pub fn classify(&self, sentence: &Sentence) -> Result<Classification> {
        if sentence.is_empty() {
            return Err(Error::EmptySentence);
        }
        let scores = self.scores(sentence.text());
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        let second = scores
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != best)
            .map(|(_, s)| *s)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Classification {
            language: self.languages[best].clone(),
            margin: scores[best] - second,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{MAGIC}").unwrap();
        writeln!(out, "order\t{}", self.order).unwrap();
        writeln!(out, "languages\t{}", self.languages.join("\t")).unwrap();
        let mut keys: Vec<&String> = self.table.keys().collect();
        keys.sort_unstable();
        for (i, lang) in self.languages.iter().enumerate() {
            writeln!(out, "{lang}\t<prior>\t{}", self.priors[i]).unwrap();
            writeln!(out, "{lang}\t{UNSEEN_KEY}\t{}", self.unseen[i]).unwrap();
            for k in &keys {
                writeln!(out, "{lang}\t{}\t{}", escape(k), self.table[*k][i]).unwrap();
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::parse(path, line, msg);
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, MAGIC)) => {}
            _ => return Err(err(1, format!("expected header {MAGIC:?}"))),
        }
        let (n, line) = lines.next().ok_or_else(|| err(2, "missing order line".into()))?;
        let order = line
            .strip_prefix("order\t")
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|o| *o > 0)
            .ok_or_else(|| err(n, "malformed order line".into()))?;
        let (n, line) = lines.next().ok_or_else(|| err(3, "missing languages line".into()))?;
        let languages: Vec<String> = line
            .strip_prefix("languages\t")
            .ok_or_else(|| err(n, "malformed languages line".into()))?
            .split('\t')
            .map(str::to_string)
            .collect();
        if languages.len() < 2 {
            return Err(err(n, "need at least 2 languages".into()));
        }
        let k = languages.len();
        let mut priors = vec![f64::NAN; k];
        let mut unseen = vec![f64::NAN; k];
        let mut table: HashMap<String, Vec<f64>> = HashMap::new();
        for (n, line) in lines {
            let mut fields = line.splitn(3, '\t');
            let (Some(lang), Some(key), Some(value)) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(err(n, "expected lang<TAB>ngram<TAB>logprob".into()));
            };
            let li = languages
                .iter()
                .position(|l| l == lang)
                .ok_or_else(|| err(n, format!("undeclared language {lang:?}")))?;
            let value: f64 = value
                .parse()
                .map_err(|_| err(n, format!("non-numeric log probability {value:?}")))?;
            match key {
                "<prior>" => priors[li] = value,
                UNSEEN_KEY => unseen[li] = value,
                _ => table.entry(unescape(key)).or_insert_with(|| vec![f64::NAN; k])[li] = value,
            }
        }
        let complete = priors.iter().chain(&unseen).all(|v| v.is_finite())
            && table.values().all(|p| p.iter().all(|v| v.is_finite()));
        if !complete {
            return Err(err(0, "model table is incomplete".into()));
        }
        Ok(LangIdModel {
            order,
            languages,
            priors,
            table,
            unseen,
        })
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\t', "\\t")
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}
