//! Independent evaluators shared by several test binaries.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use mtprep::lm::{BOS, EOS, UNK};
use mtprep::Sentence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sentences from a random first-order Markov chain over `types` words, so
/// that higher-order n-grams repeat.
pub fn markov_corpus(seed: u64, types: usize, sentences: usize, max_len: usize) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = (0..types).map(|i| format!("w{i}")).collect();
    let successors: Vec<Vec<usize>> = (0..types)
        .map(|_| (0..3).map(|_| rng.gen_range(0..types)).collect())
        .collect();
    (0..sentences)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            let mut cur = rng.gen_range(0..types);
            let mut toks = vec![words[cur].clone()];
            for _ in 1..len {
                cur = if rng.gen_bool(0.8) {
                    successors[cur][rng.gen_range(0..3)]
                } else {
                    rng.gen_range(0..types)
                };
                toks.push(words[cur].clone());
            }
            Sentence::new(toks.join(" ")).unwrap()
        })
        .collect()
}

/// Parsed ARPA tables keyed by the n-gram text, log10 values.
pub struct ArpaTables {
    pub order: usize,
    entries: HashMap<String, (f64, f64)>,
}

pub fn parse_literally(text: &str) -> ArpaTables {
    let mut entries = HashMap::new();
    let mut order = 0;
    let mut in_section = false;
    for line in text.lines() {
        let line = line.trim_end();
        if line.starts_with('\\') {
            in_section = line.ends_with("-grams:");
            if in_section {
                order = order.max(line[1..line.find('-').unwrap()].parse::<usize>().unwrap());
            }
            continue;
        }
        if !in_section || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let p: f64 = fields[0].parse().unwrap();
        let b: f64 = fields.get(2).map_or(0.0, |s| s.parse().unwrap());
        entries.insert(fields[1].to_string(), (p, b));
    }
    ArpaTables { order, entries }
}

impl ArpaTables {
    /// log10 P(w | h) by the textbook backoff rule.
    pub fn log10_prob(&self, h: &[&str], w: &str) -> f64 {
        let h = &h[h.len().saturating_sub(self.order - 1)..];
        let mut full: Vec<&str> = h.to_vec();
        full.push(w);
        if let Some((p, _)) = self.entries.get(&full.join(" ")) {
            return *p;
        }
        if h.is_empty() {
            panic!("{w} has no unigram");
        }
        let backoff = self.entries.get(&h.join(" ")).map_or(0.0, |e| e.1);
        backoff + self.log10_prob(&h[1..], w)
    }

    pub fn sentence_ln_prob(&self, tokens: &[&str], known: &BTreeSet<&str>) -> f64 {
        let mut padded = vec![BOS];
        padded.extend(tokens.iter().map(|t| if known.contains(t) { *t } else { UNK }));
        padded.push(EOS);
        let mut total = 0.0;
        for i in 1..padded.len() {
            total += self.log10_prob(&padded[..i], padded[i]);
        }
        total * std::f64::consts::LN_10
    }
}

/// Every sentence of length 1..=max_len over `words`.
pub fn all_sentences<'a>(words: &[&'a str], max_len: usize) -> Vec<Vec<&'a str>> {
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<&str>> = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for w in words {
                let mut t = s.clone();
                t.push(*w);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::new();
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('\\') => out.push('\\'),
                other => panic!("bad escape {other:?}"),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// `(input, expected)` rows of a tab-separated golden file.
pub fn golden(name: &str) -> Vec<(String, String)> {
    let path = format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let (input, expected) = l.split_once('\t').unwrap();
            (unescape(input), unescape(expected))
        })
        .collect()
}

/// Independent corpus BLEU: n-gram matches counted by linear scans, no
/// hashing, precisions in percent as in the mteval formulation.
pub fn oracle_bleu(hyps: &[Vec<&str>], refs: &[Vec<&str>]) -> f64 {
    let mut correct = [0u64; 4];
    let mut total = [0u64; 4];
    let (mut hyp_len, mut ref_len) = (0u64, 0u64);
    for (h, r) in hyps.iter().zip(refs) {
        hyp_len += h.len() as u64;
        ref_len += r.len() as u64;
        for n in 1..=4 {
            if h.len() < n {
                continue;
            }
            total[n - 1] += (h.len() + 1 - n) as u64;
            for i in 0..=h.len() - n {
                let gram = &h[i..i + n];
                // only count each distinct n-gram at its first occurrence
                if (0..i).any(|j| &h[j..j + n] == gram) {
                    continue;
                }
                let in_hyp = (0..=h.len() - n).filter(|&j| &h[j..j + n] == gram).count();
                let in_ref = if r.len() >= n {
                    (0..=r.len() - n).filter(|&j| &r[j..j + n] == gram).count()
                } else {
                    0
                };
                correct[n - 1] += in_hyp.min(in_ref) as u64;
            }
        }
    }
    let mut log_sum = 0.0;
    let mut smooth = 1.0;
    for n in 0..4 {
        if total[n] == 0 {
            return 0.0;
        }
        let p = if correct[n] == 0 {
            smooth *= 2.0;
            100.0 / (smooth * total[n] as f64)
        } else {
            100.0 * correct[n] as f64 / total[n] as f64
        };
        log_sum += p.ln();
    }
    let bp = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    bp * (log_sum / 4.0).exp()
}

pub fn random_sentence(rng: &mut ChaCha8Rng, words: &[&'static str], max_len: usize) -> Vec<&'static str> {
    let n = rng.gen_range(0..=max_len);
    (0..n).map(|_| words[rng.gen_range(0..words.len())]).collect()
}

pub type TokenCorpus = Vec<Vec<&'static str>>;

/// Random (hyp, ref) corpora biased towards overlap, as token vectors.
pub fn random_bleu_corpora(seed: u64, count: usize) -> Vec<(TokenCorpus, TokenCorpus)> {
    let words = ["a", "b", "c", "d", "the", "cat", "sat", "mat"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let segments = rng.gen_range(1..=5);
            let mut hyps = Vec::new();
            let mut refs = Vec::new();
            for _ in 0..segments {
                let r = random_sentence(&mut rng, &words, 9);
                let h = if rng.gen_bool(0.5) {
                    let mut h = r.clone();
                    if !h.is_empty() {
                        let k = rng.gen_range(0..h.len());
                        h[k] = words[rng.gen_range(0..words.len())];
                    }
                    h
                } else {
                    random_sentence(&mut rng, &words, 9)
                };
                hyps.push(h);
                refs.push(r);
            }
            if hyps.iter().all(|h| h.is_empty()) {
                hyps[0].push("a");
            }
            (hyps, refs)
        })
        .collect()
}
