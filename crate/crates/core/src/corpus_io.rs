//! Line-oriented corpus readers and writers.
//!
//! Monolingual corpora are one sentence per line. Parallel corpora are two
//! line-aligned files. All readers stream: memory use does not grow with the
//! number of lines read.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sentence. Tokens are the maximal runs of non-whitespace characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence {
    text: String,
    token_count: usize,
}

impl Sentence {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.contains(['\n', '\r']) {
            return Err(Error::InvalidSentence(format!(
                "line break inside sentence {text:?}"
            )));
        }
        let token_count = text.split_whitespace().count();
        Ok(Sentence { text, token_count })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> + '_ {
        self.text.split_whitespace()
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }

    pub fn is_empty(&self) -> bool {
        self.token_count == 0
    }

    pub fn into_text(self) -> String {
        self.text
    }
}

impl std::fmt::Display for Sentence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Sentence,
    pub target: Sentence,
    /// 0-based position in the input files.
    pub line_index: usize,
}

/// Per-run accounting of how many items each filter rule removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub input_count: u64,
    pub kept_count: u64,
    pub dropped_by_rule: BTreeMap<String, u64>,
}

impl FilterStats {
    pub fn record_kept(&mut self) {
        self.input_count += 1;
        self.kept_count += 1;
    }

    pub fn record_drop(&mut self, rule: &str) {
        self.input_count += 1;
        *self.dropped_by_rule.entry(rule.to_string()).or_default() += 1;
    }

    pub fn dropped(&self, rule: &str) -> u64 {
        self.dropped_by_rule.get(rule).copied().unwrap_or(0)
    }

    pub fn total_dropped(&self) -> u64 {
        self.dropped_by_rule.values().sum()
    }

    /// `input_count == kept_count + total_dropped()`.
    pub fn is_consistent(&self) -> bool {
        self.input_count == self.kept_count + self.total_dropped()
    }

    pub fn merge(&mut self, other: &FilterStats) {
        self.input_count += other.input_count;
        self.kept_count += other.kept_count;
        for (rule, n) in &other.dropped_by_rule {
            *self.dropped_by_rule.entry(rule.clone()).or_default() += n;
        }
    }
}

/// Reads one raw line (without the terminator). Returns `None` at EOF.
fn next_line(
    reader: &mut impl BufRead,
    buf: &mut Vec<u8>,
    path: &Path,
    line_no: usize,
) -> Option<Result<String>> {
    buf.clear();
    match reader.read_until(b'\n', buf) {
        Ok(0) => None,
        Ok(_) => {
            if buf.last() == Some(&b'\n') {
                buf.pop();
                if buf.last() == Some(&b'\r') {
                    buf.pop();
                }
            }
            Some(
                String::from_utf8(std::mem::take(buf)).map_err(|_| Error::InvalidUtf8 {
                    path: path.to_path_buf(),
                    line: line_no,
                }),
            )
        }
        Err(e) => Some(Err(Error::io(path, e))),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(|f| BufReader::with_capacity(1 << 16, f))
        .map_err(|e| Error::io(path, e))
}

/// Streaming monolingual reader. Blank lines are skipped and counted.
pub struct MonoReader<R> {
    reader: R,
    path: PathBuf,
    buf: Vec<u8>,
    lines_read: usize,
    skipped_empty: usize,
}

impl MonoReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(Self::new(open(path)?, path))
    }
}

impl<R: BufRead> MonoReader<R> {
    pub fn new(reader: R, name: impl Into<PathBuf>) -> Self {
        MonoReader {
            reader,
            path: name.into(),
            buf: Vec::new(),
            lines_read: 0,
            skipped_empty: 0,
        }
    }

    pub fn skipped_empty(&self) -> usize {
        self.skipped_empty
    }

    pub fn lines_read(&self) -> usize {
        self.lines_read
    }
}

impl<R: BufRead> Iterator for MonoReader<R> {
    type Item = Result<Sentence>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = next_line(&mut self.reader, &mut self.buf, &self.path, self.lines_read + 1)?;
            self.lines_read += 1;
            let sentence = match line {
                Ok(text) => Sentence::new(text),
                Err(e) => return Some(Err(e)),
            };
            match sentence {
                Ok(s) if s.is_empty() => self.skipped_empty += 1,
                other => return Some(other),
            }
        }
    }
}

/// Opens `path` as a stream of non-empty sentences in file order.
pub fn read_mono(path: impl AsRef<Path>) -> Result<MonoReader<BufReader<File>>> {
    MonoReader::open(path)
}

/// Raw lines of a file, blank lines included. Used where line alignment
/// with another file matters (hypotheses, references).
pub struct LineReader<R> {
    reader: R,
    path: PathBuf,
    buf: Vec<u8>,
    lines_read: usize,
}

impl LineReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(LineReader {
            reader: open(path)?,
            path: path.to_path_buf(),
            buf: Vec::new(),
            lines_read: 0,
        })
    }
}

impl<R: BufRead> Iterator for LineReader<R> {
    type Item = Result<String>;

    fn next(&mut self) -> Option<Self::Item> {
        let line = next_line(&mut self.reader, &mut self.buf, &self.path, self.lines_read + 1)?;
        self.lines_read += 1;
        Some(line)
    }
}

/// Every line of `path`, blank lines included.
pub fn read_lines(path: impl AsRef<Path>) -> Result<Vec<String>> {
    LineReader::open(path)?.collect()
}

/// Streaming reader over two line-aligned files. Empty lines are kept so the
/// alignment never shifts.
pub struct ParallelReader<R> {
    source: R,
    target: R,
    source_path: PathBuf,
    target_path: PathBuf,
    source_buf: Vec<u8>,
    target_buf: Vec<u8>,
    next_index: usize,
    finished: bool,
}

impl ParallelReader<BufReader<File>> {
    pub fn open(source: impl AsRef<Path>, target: impl AsRef<Path>) -> Result<Self> {
        let (s, t) = (source.as_ref(), target.as_ref());
        Ok(Self::new(open(s)?, open(t)?, s, t))
    }
}

impl<R: BufRead> ParallelReader<R> {
    pub fn new(
        source: R,
        target: R,
        source_name: impl Into<PathBuf>,
        target_name: impl Into<PathBuf>,
    ) -> Self {
        ParallelReader {
            source,
            target,
            source_path: source_name.into(),
            target_path: target_name.into(),
            source_buf: Vec::new(),
            target_buf: Vec::new(),
            next_index: 0,
            finished: false,
        }
    }

    fn count_rest(reader: &mut R, buf: &mut Vec<u8>) -> usize {
        let mut n = 0;
        loop {
            buf.clear();
            match reader.read_until(b'\n', buf) {
                Ok(0) | Err(_) => return n,
                Ok(_) => n += 1,
            }
        }
    }
}

impl<R: BufRead> Iterator for ParallelReader<R> {
    type Item = Result<SentencePair>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        let line_no = self.next_index + 1;
        let src = next_line(&mut self.source, &mut self.source_buf, &self.source_path, line_no);
        let tgt = next_line(&mut self.target, &mut self.target_buf, &self.target_path, line_no);
        let (src, tgt) = match (src, tgt) {
            (None, None) => {
                self.finished = true;
                return None;
            }
            (Some(src), Some(tgt)) => (src, tgt),
            (src, _) => {
                self.finished = true;
                let done = self.next_index;
                let (source_lines, target_lines) = if src.is_some() {
                    let rest = Self::count_rest(&mut self.source, &mut self.source_buf);
                    (done + 1 + rest, done)
                } else {
                    let rest = Self::count_rest(&mut self.target, &mut self.target_buf);
                    (done, done + 1 + rest)
                };
                return Some(Err(Error::LineCountMismatch {
                    source_lines,
                    target_lines,
                }));
            }
        };
        let pair = (|| {
            Ok(SentencePair {
                source: Sentence::new(src?)?,
                target: Sentence::new(tgt?)?,
                line_index: self.next_index,
            })
        })();
        self.next_index += 1;
        if pair.is_err() {
            self.finished = true;
        }
        Some(pair)
    }
}

/// Opens two aligned files as a stream of pairs indexed from 0.
pub fn read_parallel(
    source: impl AsRef<Path>,
    target: impl AsRef<Path>,
) -> Result<ParallelReader<BufReader<File>>> {
    ParallelReader::open(source, target)
}

/// Buffered line writer that remembers its path for error messages.
pub struct LineWriter {
    inner: BufWriter<File>,
    path: PathBuf,
    lines: u64,
}

impl LineWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(LineWriter {
            inner: BufWriter::with_capacity(1 << 16, file),
            path,
            lines: 0,
        })
    }

    pub fn write_line(&mut self, line: &str) -> Result<()> {
        self.inner
            .write_all(line.as_bytes())
            .and_then(|_| self.inner.write_all(b"\n"))
            .map_err(|e| Error::io(&self.path, e))?;
        self.lines += 1;
        Ok(())
    }

    pub fn lines(&self) -> u64 {
        self.lines
    }

    pub fn finish(mut self) -> Result<u64> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.lines)
    }
}

/// Writes one sentence per line. Returns the number of lines written.
pub fn write_mono<I>(sentences: I, path: impl AsRef<Path>) -> Result<u64>
where
    I: IntoIterator<Item = Result<Sentence>>,
{
    let mut out = LineWriter::create(path)?;
    for s in sentences {
        out.write_line(s?.text())?;
    }
    out.finish()
}

pub fn write_parallel<I>(pairs: I, source: impl AsRef<Path>, target: impl AsRef<Path>) -> Result<u64>
where
    I: IntoIterator<Item = Result<SentencePair>>,
{
    let mut src = LineWriter::create(source)?;
    let mut tgt = LineWriter::create(target)?;
    for p in pairs {
        let p = p?;
        src.write_line(p.source.text())?;
        tgt.write_line(p.target.text())?;
    }
    tgt.finish()?;
    src.finish()
}
