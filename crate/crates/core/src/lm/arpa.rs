//! ARPA backoff model files.
//!
//! ```text
//! \data\
//! ngram 1=<count>
//! ...
//!
//! \1-grams:
//! <log10 prob>\t<w1>[\t<log10 backoff>]
//! ...
//!
//! \end\
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::model::{Entry, NGramModel};
use super::vocab::{Vocab, BOS, BOS_ID, EOS, UNK};
use crate::error::{Error, Result};

/// log10 probability written for `<s>`, which is never predicted.
const BOS_LOG10: f64 = -99.0;

fn to_log10(ln: f64) -> f64 {
    ln / std::f64::consts::LN_10
}

fn from_log10(l: f64) -> f64 {
    l * std::f64::consts::LN_10
}

pub fn to_arpa_string(model: &NGramModel) -> String {
    let vocab = model.vocab();
    let mut out = String::new();
    out.push_str("\\data\\\n");
    for k in 1..=model.order() {
        writeln!(out, "ngram {k}={}", model.entries(k).len()).unwrap();
    }
    for k in 1..=model.order() {
        write!(out, "\n\\{k}-grams:\n").unwrap();
        let mut rows: Vec<(&Vec<u32>, &Entry)> = model.entries(k).iter().collect();
        rows.sort_unstable_by(|a, b| a.0.cmp(b.0));
        for (g, e) in rows {
            let lp = if k == 1 && g[0] == BOS_ID {
                BOS_LOG10
            } else {
                to_log10(e.log_prob)
            };
            write!(out, "{lp}\t").unwrap();
            for (i, id) in g.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(vocab.token(*id));
            }
            if let Some(b) = e.backoff {
                write!(out, "\t{}", to_log10(b)).unwrap();
            }
            out.push('\n');
        }
    }
    out.push_str("\n\\end\\\n");
    out
}

pub fn export_arpa(model: &NGramModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_arpa_string(model)).map_err(|e| Error::io(path, e))
}

pub fn import_arpa(path: impl AsRef<Path>) -> Result<NGramModel> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        lines.push(line.map_err(|_| Error::InvalidUtf8 {
            path: path.to_path_buf(),
            line: i + 1,
        })?);
    }
    parse_arpa(lines.iter().map(String::as_str), path)
}

pub fn parse_arpa_str(text: &str) -> Result<NGramModel> {
    parse_arpa(text.lines(), Path::new("<arpa>"))
}

struct RawEntry<'a> {
    log10_prob: f64,
    words: Vec<&'a str>,
    log10_backoff: Option<f64>,
}

fn parse_arpa<'a>(lines: impl Iterator<Item = &'a str>, path: &Path) -> Result<NGramModel> {
    let err = |line: usize, msg: String| Error::parse(path, line, msg);
    let mut lines = lines
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();

    match lines.next() {
        Some((_, "\\data\\")) => {}
        Some((n, other)) => return Err(err(n, format!("expected \\data\\, found {other:?}"))),
        None => return Err(err(1, "empty ARPA file".into())),
    }

    let mut declared: Vec<usize> = Vec::new();
    while let Some(&(n, line)) = lines.peek() {
        let Some(rest) = line.strip_prefix("ngram ") else { break };
        lines.next();
        let (k, count) = rest
            .split_once('=')
            .and_then(|(k, c)| Some((k.trim().parse::<usize>().ok()?, c.trim().parse::<usize>().ok()?)))
            .ok_or_else(|| err(n, format!("malformed count line {line:?}")))?;
        if k != declared.len() + 1 {
            return Err(err(n, format!("expected ngram {} count, found order {k}", declared.len() + 1)));
        }
        declared.push(count);
    }
    if declared.is_empty() {
        return Err(err(lines.peek().map_or(0, |l| l.0), "no ngram counts declared".into()));
    }
    let order = declared.len();

    let mut sections: Vec<Vec<RawEntry>> = Vec::with_capacity(order);
    for (k, &expected) in declared.iter().enumerate().map(|(i, c)| (i + 1, c)) {
        let header = format!("\\{k}-grams:");
        match lines.next() {
            Some((_, l)) if l == header => {}
            Some((n, l)) => return Err(err(n, format!("expected section header {header:?}, found {l:?}"))),
            None => return Err(err(0, format!("missing section {header:?}"))),
        }
        let mut rows = Vec::with_capacity(expected);
        while let Some(&(n, line)) = lines.peek() {
            if line.starts_with('\\') {
                break;
            }
            lines.next();
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 && fields.len() != 3 {
                return Err(err(n, format!("expected 2 or 3 tab-separated fields, found {}", fields.len())));
            }
            let number = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| err(n, format!("non-numeric field {s:?}")))
            };
            let log10_prob = number(fields[0])?;
            let words: Vec<&str> = fields[1].split(' ').filter(|w| !w.is_empty()).collect();
            if words.len() != k {
                return Err(err(n, format!("expected {k} words in {k}-gram, found {}", words.len())));
            }
            let log10_backoff = fields.get(2).map(|f| number(f)).transpose()?;
            rows.push(RawEntry {
                log10_prob,
                words,
                log10_backoff,
            });
        }
        if rows.len() != expected {
            let at = lines.peek().map_or(0, |l| l.0);
            return Err(err(
                at,
                format!("count mismatch in {k}-grams: declared {expected}, found {}", rows.len()),
            ));
        }
        sections.push(rows);
    }
    match lines.next() {
        Some((_, "\\end\\")) => {}
        Some((n, l)) => return Err(err(n, format!("expected \\end\\, found {l:?}"))),
        None => return Err(err(0, "missing \\end\\".into())),
    }

    let vocab = Vocab::from_tokens(sections[0].iter().map(|r| r.words[0]));
    for marker in [EOS, UNK] {
        if !sections[0].iter().any(|r| r.words[0] == marker) {
            return Err(err(0, format!("unigram section lacks {marker}")));
        }
    }
    let mut tables: Vec<HashMap<Vec<u32>, Entry>> = Vec::with_capacity(order);
    for (k, rows) in sections.iter().enumerate() {
        let mut table = HashMap::with_capacity(rows.len());
        for r in rows {
            let ids = r
                .words
                .iter()
                .map(|w| vocab.get(w).ok_or_else(|| err(0, format!("{w:?} missing from 1-grams"))))
                .collect::<Result<Vec<u32>>>()?;
            let log_prob = if k == 0 && r.words[0] == BOS && r.log10_prob <= BOS_LOG10 {
                f64::NEG_INFINITY
            } else {
                from_log10(r.log10_prob)
            };
            table.insert(
                ids,
                Entry {
                    log_prob,
                    backoff: r.log10_backoff.map(from_log10),
                },
            );
        }
        tables.push(table);
    }
    tables[0].entry(vec![BOS_ID]).or_insert(Entry {
        log_prob: f64::NEG_INFINITY,
        backoff: None,
    });
    Ok(NGramModel::from_parts(order, vocab, tables))
}
