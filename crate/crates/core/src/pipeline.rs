//! Declarative end-to-end runs.
//!
//! A pipeline is a TOML document with a global seed, a report directory and
//! an ordered list of `[[stage]]` tables, each tagged with `kind`:
//!
//! ```toml
//! seed = 17
//! report_dir = "reports"
//!
//! [[stage]]
//! kind = "filter-bitext"
//! src = "data/train.en"
//! tgt = "data/train.de"
//! out_src = "work/train.filtered.en"
//! out_tgt = "work/train.filtered.de"
//! langid_model = "data/langid.model"
//! ```
//!
//! Relative paths are resolved against the directory holding the config.
//! Before anything runs, every stage is checked: its inputs must exist or be
//! written by an earlier stage, and its parameters must be valid. All
//! problems are reported at once. Each stage then writes a JSON report
//! named `NN-kind.json`, and `manifest.json` records SHA-256 digests of
//! every input and output. Timestamps appear only in the manifest.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bleu::{corpus_bleu, BleuReport, Tokenizer};
use crate::corpus_io::{read_lines, read_mono, read_parallel, write_parallel, LineWriter, Sentence};
use crate::error::{Error, Result};
use crate::filter::{filter_bitext_into, filter_mono_into, FilterConfig, FilterReport, DEFAULT_MAX_RATIO, DEFAULT_MAX_TOKENS};
use crate::langid::{LangIdModel, DEFAULT_ORDER};
use crate::lm::{count_ngrams, estimate_kn, export_arpa, import_arpa, CountConfig};
use crate::mix::{mix, MixConfig, MixRatio};
use crate::postprocess::{convert_quotes, QuoteConfig, QuoteStyle};
use crate::rerank::{read_nbest, rerank_all, tune, RerankWeights, SearchRanges, TuneConfig, EXPECTED_NBEST_SIZE};
use crate::select::{score_dump, select_fraction, select_into, SelectionConfig, DEFAULT_CUTOFF};

pub const DEFAULT_SEED: u64 = 17;
const SCORE_BATCH: usize = 1 << 14;

fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_max_tokens() -> usize {
    DEFAULT_MAX_TOKENS
}
fn default_max_ratio() -> f64 {
    DEFAULT_MAX_RATIO
}
fn default_src_lang() -> String {
    "en".into()
}
fn default_tgt_lang() -> String {
    "de".into()
}
fn default_langid_order() -> usize {
    DEFAULT_ORDER
}
fn default_lm_order() -> usize {
    5
}
fn default_min_count() -> u64 {
    1
}
fn default_cutoff() -> f64 {
    DEFAULT_CUTOFF
}
fn default_true() -> bool {
    true
}
fn default_samples() -> usize {
    crate::rerank::DEFAULT_SAMPLES
}
fn default_expected_nbest() -> usize {
    EXPECTED_NBEST_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterBitextStage {
    pub src: PathBuf,
    pub tgt: PathBuf,
    pub out_src: PathBuf,
    pub out_tgt: PathBuf,
    /// Language identification runs only when a model is given.
    #[serde(default)]
    pub langid_model: Option<PathBuf>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    #[serde(default = "default_max_ratio")]
    pub max_ratio: f64,
    #[serde(default = "default_src_lang")]
    pub src_lang: String,
    #[serde(default = "default_tgt_lang")]
    pub tgt_lang: String,
    #[serde(default)]
    pub min_margin: Option<f64>,
}

impl FilterBitextStage {
    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            max_tokens: self.max_tokens,
            max_ratio: self.max_ratio,
            source_lang: self.src_lang.clone(),
            target_lang: self.tgt_lang.clone(),
            langid_enabled: self.langid_model.is_some(),
            min_margin: self.min_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterMonoStage {
    pub input: PathBuf,
    pub output: PathBuf,
    pub lang: String,
    #[serde(default)]
    pub langid_model: Option<PathBuf>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    #[serde(default)]
    pub min_margin: Option<f64>,
}

impl FilterMonoStage {
    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            max_tokens: self.max_tokens,
            source_lang: self.lang.clone(),
            target_lang: self.lang.clone(),
            langid_enabled: self.langid_model.is_some(),
            min_margin: self.min_margin,
            ..FilterConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangidTrainStage {
    /// Language code to training text.
    pub corpora: BTreeMap<String, PathBuf>,
    pub model_out: PathBuf,
    #[serde(default = "default_langid_order")]
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmTrainStage {
    pub text: PathBuf,
    pub arpa_out: PathBuf,
    #[serde(default = "default_lm_order")]
    pub order: usize,
    #[serde(default = "default_min_count")]
    pub min_count: u64,
    /// Texts whose combined word types form a closed vocabulary. Two models
    /// trained with the same list share a vocabulary.
    #[serde(default)]
    pub vocab_from: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmScoreStage {
    pub arpa: PathBuf,
    pub text: PathBuf,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectStage {
    pub in_lm: PathBuf,
    pub out_lm: PathBuf,
    pub text: PathBuf,
    pub output: PathBuf,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    /// Replaces `cutoff` with the one selecting this fraction of the input.
    #[serde(default)]
    pub target_fraction: Option<f64>,
    #[serde(default)]
    pub scores_out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixStage {
    pub bitext_src: PathBuf,
    pub bitext_tgt: PathBuf,
    pub synth_src: PathBuf,
    pub synth_tgt: PathBuf,
    pub out_src: PathBuf,
    pub out_tgt: PathBuf,
    #[serde(default)]
    pub ratio: MixRatio,
    /// Falls back to the pipeline seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_true")]
    pub shuffle: bool,
    #[serde(default)]
    pub mark_synthetic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneStage {
    pub nbest: PathBuf,
    pub refs: PathBuf,
    pub weights_out: PathBuf,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tokenizer: Tokenizer,
    #[serde(default)]
    pub ranges: SearchRanges,
    #[serde(default)]
    pub dataset: Option<String>,
    /// Lists longer than this are reported, not rejected.
    #[serde(default = "default_expected_nbest")]
    pub expected_nbest: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankStage {
    pub nbest: PathBuf,
    pub weights: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BleuStage {
    pub hyp: PathBuf,
    pub reference: PathBuf,
    #[serde(default)]
    pub tokenizer: Tokenizer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostprocessStage {
    pub input: PathBuf,
    pub output: PathBuf,
    #[serde(default)]
    pub quotes: QuoteStyle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Stage {
    FilterBitext(FilterBitextStage),
    FilterMono(FilterMonoStage),
    LangidTrain(LangidTrainStage),
    LmTrain(LmTrainStage),
    LmScore(LmScoreStage),
    Select(SelectStage),
    Mix(MixStage),
    Tune(TuneStage),
    Rerank(RerankStage),
    Bleu(BleuStage),
    Postprocess(PostprocessStage),
}

impl Stage {
    pub fn kind(&self) -> &'static str {
        match self {
            Stage::FilterBitext(_) => "filter-bitext",
            Stage::FilterMono(_) => "filter-mono",
            Stage::LangidTrain(_) => "langid-train",
            Stage::LmTrain(_) => "lm-train",
            Stage::LmScore(_) => "lm-score",
            Stage::Select(_) => "select",
            Stage::Mix(_) => "mix",
            Stage::Tune(_) => "tune",
            Stage::Rerank(_) => "rerank",
            Stage::Bleu(_) => "bleu",
            Stage::Postprocess(_) => "postprocess",
        }
    }

    pub fn inputs(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = match self {
            Stage::FilterBitext(s) => vec![&s.src, &s.tgt],
            Stage::FilterMono(s) => vec![&s.input],
            Stage::LangidTrain(s) => s.corpora.values().map(PathBuf::as_path).collect(),
            Stage::LmTrain(s) => {
                let mut v = vec![s.text.as_path()];
                v.extend(s.vocab_from.iter().map(PathBuf::as_path));
                v
            }
            Stage::LmScore(s) => vec![&s.arpa, &s.text],
            Stage::Select(s) => vec![&s.in_lm, &s.out_lm, &s.text],
            Stage::Mix(s) => vec![&s.bitext_src, &s.bitext_tgt, &s.synth_src, &s.synth_tgt],
            Stage::Tune(s) => vec![&s.nbest, &s.refs],
            Stage::Rerank(s) => vec![&s.nbest, &s.weights],
            Stage::Bleu(s) => vec![&s.hyp, &s.reference],
            Stage::Postprocess(s) => vec![&s.input],
        };
        match self {
            Stage::FilterBitext(FilterBitextStage { langid_model: Some(m), .. })
            | Stage::FilterMono(FilterMonoStage { langid_model: Some(m), .. }) => v.push(m),
            _ => {}
        }
        v
    }

    pub fn outputs(&self) -> Vec<&Path> {
        match self {
            Stage::FilterBitext(s) => vec![&s.out_src, &s.out_tgt],
            Stage::FilterMono(s) => vec![&s.output],
            Stage::LangidTrain(s) => vec![&s.model_out],
            Stage::LmTrain(s) => vec![&s.arpa_out],
            Stage::LmScore(s) => vec![&s.out],
            Stage::Select(s) => {
                let mut v = vec![s.output.as_path()];
                v.extend(s.scores_out.as_deref());
                v
            }
            Stage::Mix(s) => vec![&s.out_src, &s.out_tgt],
            Stage::Tune(s) => vec![&s.weights_out],
            Stage::Rerank(s) => vec![&s.output],
            Stage::Bleu(_) => vec![],
            Stage::Postprocess(s) => vec![&s.output],
        }
    }

    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Stage::FilterBitext(s) => {
                let mut v = vec![&mut s.src, &mut s.tgt, &mut s.out_src, &mut s.out_tgt];
                v.extend(s.langid_model.as_mut());
                v
            }
            Stage::FilterMono(s) => {
                let mut v = vec![&mut s.input, &mut s.output];
                v.extend(s.langid_model.as_mut());
                v
            }
            Stage::LangidTrain(s) => {
                let mut v: Vec<&mut PathBuf> = s.corpora.values_mut().collect();
                v.push(&mut s.model_out);
                v
            }
            Stage::LmTrain(s) => {
                let mut v = vec![&mut s.text, &mut s.arpa_out];
                v.extend(s.vocab_from.iter_mut());
                v
            }
            Stage::LmScore(s) => vec![&mut s.arpa, &mut s.text, &mut s.out],
            Stage::Select(s) => {
                let mut v = vec![&mut s.in_lm, &mut s.out_lm, &mut s.text, &mut s.output];
                v.extend(s.scores_out.as_mut());
                v
            }
            Stage::Mix(s) => vec![
                &mut s.bitext_src,
                &mut s.bitext_tgt,
                &mut s.synth_src,
                &mut s.synth_tgt,
                &mut s.out_src,
                &mut s.out_tgt,
            ],
            Stage::Tune(s) => vec![&mut s.nbest, &mut s.refs, &mut s.weights_out],
            Stage::Rerank(s) => vec![&mut s.nbest, &mut s.weights, &mut s.output],
            Stage::Bleu(s) => vec![&mut s.hyp, &mut s.reference],
            Stage::Postprocess(s) => vec![&mut s.input, &mut s.output],
        }
    }

    /// Parameter problems, without touching the file system.
    pub fn parameter_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        let mut check = |r: Result<()>| {
            if let Err(e) = r {
                errors.push(e.to_string());
            }
        };
        match self {
            Stage::FilterBitext(s) => check(s.filter_config().validate()),
            Stage::FilterMono(s) => check(s.filter_config().validate()),
            Stage::LangidTrain(s) => {
                if s.order == 0 {
                    check(Err(Error::Config("langid order must be at least 1".into())));
                }
                if s.corpora.len() < 2 {
                    check(Err(Error::Config("langid training needs at least two languages".into())));
                }
            }
            Stage::LmTrain(s) => {
                if !(1..=crate::lm::MAX_ORDER).contains(&s.order) {
                    check(Err(Error::Config(format!(
                        "n-gram order must be in 1..={}, got {}",
                        crate::lm::MAX_ORDER,
                        s.order
                    ))));
                }
                if s.min_count == 0 {
                    check(Err(Error::Config("min_count must be at least 1".into())));
                }
            }
            Stage::Select(s) => {
                if !s.cutoff.is_finite() {
                    check(Err(Error::Config(format!("cutoff must be finite, got {}", s.cutoff))));
                }
                if let Some(f) = s.target_fraction {
                    if !(0.0..=1.0).contains(&f) {
                        check(Err(Error::Config(format!("target fraction {f} outside [0, 1]"))));
                    }
                }
            }
            Stage::Tune(s) => {
                check(s.ranges.validate());
                if s.samples == 0 {
                    check(Err(Error::Config("samples must be at least 1".into())));
                }
            }
            Stage::LmScore(_) | Stage::Mix(_) | Stage::Rerank(_) | Stage::Bleu(_) | Stage::Postprocess(_) => {}
        }
        errors
    }

    /// Runs the stage and returns its report. `seed` is used by stages
    /// that draw random numbers and have no seed of their own.
    pub fn run(&self, seed: u64) -> Result<Value> {
        for out in self.outputs() {
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        match self {
            Stage::FilterBitext(s) => run_filter_bitext(s),
            Stage::FilterMono(s) => run_filter_mono(s),
            Stage::LangidTrain(s) => run_langid_train(s),
            Stage::LmTrain(s) => run_lm_train(s),
            Stage::LmScore(s) => run_lm_score(s),
            Stage::Select(s) => run_select(s),
            Stage::Mix(s) => run_mix(s, seed),
            Stage::Tune(s) => run_tune(s, seed),
            Stage::Rerank(s) => run_rerank(s),
            Stage::Bleu(s) => run_bleu(s),
            Stage::Postprocess(s) => run_postprocess(s),
        }
    }
}

fn load_langid(path: Option<&PathBuf>) -> Result<Option<LangIdModel>> {
    path.map(LangIdModel::load).transpose()
}

fn run_filter_bitext(s: &FilterBitextStage) -> Result<Value> {
    let model = load_langid(s.langid_model.as_ref())?;
    let cfg = s.filter_config();
    let mut src = LineWriter::create(&s.out_src)?;
    let mut tgt = LineWriter::create(&s.out_tgt)?;
    let stats = filter_bitext_into(read_parallel(&s.src, &s.tgt)?, &cfg, model.as_ref(), |p| {
        src.write_line(p.source.text())?;
        tgt.write_line(p.target.text())
    })?;
    src.finish()?;
    tgt.finish()?;
    log::info!("filter-bitext: kept {} of {}", stats.kept_count, stats.input_count);
    Ok(serde_json::to_value(FilterReport::new(cfg, stats))?)
}

fn run_filter_mono(s: &FilterMonoStage) -> Result<Value> {
    let model = load_langid(s.langid_model.as_ref())?;
    let cfg = s.filter_config();
    let mut out = LineWriter::create(&s.output)?;
    let mut reader = read_mono(&s.input)?;
    let stats = filter_mono_into(reader.by_ref(), &s.lang, &cfg, model.as_ref(), |x| out.write_line(x.text()))?;
    out.finish()?;
    log::info!("filter-mono: kept {} of {}", stats.kept_count, stats.input_count);
    let mut report = serde_json::to_value(FilterReport::new(cfg, stats))?;
    report["blank_lines_skipped"] = json!(reader.skipped_empty());
    Ok(report)
}

fn run_langid_train(s: &LangidTrainStage) -> Result<Value> {
    let mut corpora = Vec::new();
    let mut sizes = BTreeMap::new();
    for (lang, path) in &s.corpora {
        let sentences: Vec<Sentence> = read_mono(path)?.collect::<Result<_>>()?;
        sizes.insert(lang.clone(), sentences.len());
        corpora.push((lang.clone(), sentences));
    }
    let model = LangIdModel::train(corpora, s.order)?;
    model.save(&s.model_out)?;
    Ok(json!({
        "schema_version": crate::REPORT_SCHEMA_VERSION,
        "order": s.order,
        "training_sentences": sizes,
    }))
}

/// Union of word types over `paths`, sorted.
fn vocabulary_of(paths: &[PathBuf]) -> Result<Vec<String>> {
    let mut types = BTreeSet::new();
    for p in paths {
        for s in read_mono(p)? {
            for t in s?.tokens() {
                if !types.contains(t) {
                    types.insert(t.to_string());
                }
            }
        }
    }
    Ok(types.into_iter().collect())
}

fn run_lm_train(s: &LmTrainStage) -> Result<Value> {
    let cfg = CountConfig {
        order: s.order,
        min_count: s.min_count,
        fixed_vocab: if s.vocab_from.is_empty() {
            None
        } else {
            Some(vocabulary_of(&s.vocab_from)?)
        },
    };
    let counts = count_ngrams(|| read_mono(&s.text), &cfg)?;
    let sentences = counts.total_sentences();
    let model = estimate_kn(&counts)?;
    export_arpa(&model, &s.arpa_out)?;
    let ngrams: Vec<usize> = (1..=model.order()).map(|k| model.entries(k).len()).collect();
    log::info!("lm-train: order {} over {sentences} sentences", s.order);
    Ok(json!({
        "schema_version": crate::REPORT_SCHEMA_VERSION,
        "order": s.order,
        "min_count": s.min_count,
        "shared_vocab": !s.vocab_from.is_empty(),
        "sentences": sentences,
        "vocab_size": model.vocab().len(),
        "ngrams": ngrams,
    }))
}

fn run_lm_score(s: &LmScoreStage) -> Result<Value> {
    let model = import_arpa(&s.arpa)?;
    let mut out = LineWriter::create(&s.out)?;
    let mut reader = read_mono(&s.text)?;
    let (mut index, mut tokens, mut total) = (0usize, 0usize, 0.0f64);
    let mut batch = Vec::with_capacity(SCORE_BATCH);
    loop {
        batch.clear();
        for x in reader.by_ref().take(SCORE_BATCH) {
            batch.push(x?);
        }
        if batch.is_empty() {
            break;
        }
        let scores = batch
            .par_iter()
            .map(|x| model.sentence_logprob(x))
            .collect::<Result<Vec<_>>>()?;
        for sc in scores {
            out.write_line(&format!(
                "{index}\t{}\t{}\t{}",
                sc.total_log_prob, sc.scored_token_count, sc.cross_entropy
            ))?;
            index += 1;
            tokens += sc.scored_token_count;
            total += sc.total_log_prob;
        }
    }
    out.finish()?;
    if index == 0 {
        return Err(Error::EmptyCorpus);
    }
    let cross_entropy = -total / tokens as f64;
    Ok(json!({
        "schema_version": crate::REPORT_SCHEMA_VERSION,
        "sentences": index,
        "scored_tokens": tokens,
        "total_log_prob": total,
        "cross_entropy": cross_entropy,
        "perplexity": cross_entropy.exp(),
    }))
}

fn run_select(s: &SelectStage) -> Result<Value> {
    let lm_in = import_arpa(&s.in_lm)?;
    let lm_out = import_arpa(&s.out_lm)?;
    let cfg = SelectionConfig::new(&lm_in, &lm_out).with_cutoff(s.cutoff);
    if let Some(path) = &s.scores_out {
        score_dump(read_mono(&s.text)?, &cfg, path)?;
    }
    let mut out = LineWriter::create(&s.output)?;
    let emit = |x: Sentence, _| out.write_line(x.text());
    let report = match s.target_fraction {
        Some(f) => select_fraction(|| read_mono(&s.text), &cfg, f, emit)?,
        None => select_into(read_mono(&s.text)?, &cfg, emit)?,
    };
    out.finish()?;
    log::info!("select: {} of {} lines", report.selected_count, report.input_count);
    Ok(serde_json::to_value(report)?)
}

fn run_mix(s: &MixStage, seed: u64) -> Result<Value> {
    let bitext = read_parallel(&s.bitext_src, &s.bitext_tgt)?.collect::<Result<Vec<_>>>()?;
    let synthetic = read_parallel(&s.synth_src, &s.synth_tgt)?.collect::<Result<Vec<_>>>()?;
    let cfg = MixConfig {
        ratio: s.ratio,
        seed: s.seed.unwrap_or(seed),
        shuffle: s.shuffle,
        mark_synthetic: s.mark_synthetic.clone(),
    };
    let (mixed, report) = mix(&bitext, &synthetic, &cfg)?;
    write_parallel(mixed.into_iter().map(Ok), &s.out_src, &s.out_tgt)?;
    Ok(serde_json::to_value(report)?)
}

fn run_tune(s: &TuneStage, seed: u64) -> Result<Value> {
    let dev = read_nbest(&s.nbest)?;
    let refs = read_lines(&s.refs)?;
    let oversized = dev.iter().filter(|l| l.len() > s.expected_nbest).count();
    if oversized > 0 {
        log::warn!("{oversized} n-best lists have more than {} hypotheses", s.expected_nbest);
    }
    let cfg = TuneConfig {
        ranges: s.ranges,
        n_samples: s.samples,
        seed: s.seed.unwrap_or(seed),
        tokenizer: s.tokenizer,
        dataset: s.dataset.clone(),
    };
    let weights = tune(&dev, &refs, &cfg)?;
    weights.save(&s.weights_out)?;
    let mut report = serde_json::to_value(&weights)?;
    report["schema_version"] = json!(crate::REPORT_SCHEMA_VERSION);
    report["lists"] = json!(dev.len());
    report["lists_over_expected_size"] = json!(oversized);
    report["ranges"] = serde_json::to_value(s.ranges)?;
    report["signature"] = json!(crate::bleu::signature(s.tokenizer));
    Ok(report)
}

fn run_rerank(s: &RerankStage) -> Result<Value> {
    let lists = read_nbest(&s.nbest)?;
    let weights = RerankWeights::load(&s.weights)?;
    let best = rerank_all(&lists, &weights);
    let mut out = LineWriter::create(&s.output)?;
    for h in &best {
        out.write_line(h.text.text())?;
    }
    out.finish()?;
    Ok(json!({
        "schema_version": crate::REPORT_SCHEMA_VERSION,
        "lists": lists.len(),
        "lambda1": weights.lambda1,
        "lambda2": weights.lambda2,
        "length_penalty": weights.length_penalty,
    }))
}

fn run_bleu(s: &BleuStage) -> Result<Value> {
    let hyps = read_lines(&s.hyp)?;
    let refs = read_lines(&s.reference)?;
    let score = corpus_bleu(&hyps, &refs, s.tokenizer)?;
    log::info!("BLEU = {:.2}", score.score);
    Ok(serde_json::to_value(BleuReport::new(score, s.tokenizer))?)
}

fn run_postprocess(s: &PostprocessStage) -> Result<Value> {
    let cfg = QuoteConfig {
        target_style: s.quotes,
        apply: true,
    };
    let mut out = LineWriter::create(&s.output)?;
    let (mut lines, mut changed, mut unpaired) = (0u64, 0u64, 0u64);
    for line in crate::corpus_io::LineReader::open(&s.input)? {
        let line = line?;
        let c = convert_quotes(&line, &cfg);
        lines += 1;
        changed += u64::from(c.text != line);
        if c.unpaired > 0 {
            log::warn!("{}:{lines}: unpaired quote left unchanged", s.input.display());
        }
        unpaired += c.unpaired as u64;
        out.write_line(&c.text)?;
    }
    out.finish()?;
    Ok(json!({
        "schema_version": crate::REPORT_SCHEMA_VERSION,
        "quotes": s.quotes,
        "lines": lines,
        "lines_changed": changed,
        "unpaired_quotes": unpaired,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub report_dir: PathBuf,
    #[serde(rename = "stage", default)]
    pub stages: Vec<Stage>,
}

impl PipelineConfig {
    /// Parses TOML; relative paths are taken relative to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Validation(vec![format!("config: {e}")]))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.report_dir);
        for stage in &mut cfg.stages {
            stage.paths_mut().into_iter().for_each(resolve);
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Validation(vec![format!("{}: {e}", path.display())]))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    /// Every problem found, or `Ok` when the pipeline can start.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.stages.is_empty() {
            errors.push("pipeline has no stages".to_string());
        }
        let mut produced: HashSet<&Path> = HashSet::new();
        for (i, stage) in self.stages.iter().enumerate() {
            let label = stage_label(i, stage);
            for e in stage.parameter_errors() {
                errors.push(format!("{label}: {e}"));
            }
            let inputs = stage.inputs();
            for input in &inputs {
                if !produced.contains(input) && !input.exists() {
                    errors.push(format!("{label}: input {} does not exist", input.display()));
                }
            }
            for out in stage.outputs() {
                if inputs.contains(&out) {
                    errors.push(format!("{label}: output {} is also an input", out.display()));
                }
                produced.insert(out);
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errors))
        }
    }
}

fn stage_label(index: usize, stage: &Stage) -> String {
    format!("{} ({})", index + 1, stage.kind())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn digests(paths: &[&Path]) -> Result<BTreeMap<String, String>> {
    paths
        .iter()
        .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub index: usize,
    pub kind: String,
    pub report: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub started_at_unix: u64,
    pub finished_at_unix: u64,
    pub stages: Vec<StageRecord>,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn write_json(value: &impl Serialize, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Validates, then runs every stage in order. A failing stage aborts the
/// run with its index and kind in the error.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.report_dir).map_err(|e| Error::io(&cfg.report_dir, e))?;
    let started_at_unix = unix_now();
    let mut records = Vec::with_capacity(cfg.stages.len());
    for (i, stage) in cfg.stages.iter().enumerate() {
        let label = stage_label(i, stage);
        log::info!("running stage {label}");
        let wrap = |e: Error| Error::Stage {
            stage: label.clone(),
            source: Box::new(e),
        };
        let inputs = digests(&stage.inputs()).map_err(wrap)?;
        let report = stage.run(cfg.seed).map_err(wrap)?;
        let report_name = format!("{:02}-{}.json", i + 1, stage.kind());
        write_json(&report, &cfg.report_dir.join(&report_name)).map_err(wrap)?;
        let outputs = digests(&stage.outputs()).map_err(wrap)?;
        records.push(StageRecord {
            index: i + 1,
            kind: stage.kind().to_string(),
            report: report_name,
            inputs,
            outputs,
        });
    }
    let manifest = Manifest {
        schema_version: crate::REPORT_SCHEMA_VERSION,
        seed: cfg.seed,
        started_at_unix,
        finished_at_unix: unix_now(),
        stages: records,
    };
    write_json(&manifest, &cfg.report_dir.join("manifest.json"))?;
    Ok(manifest)
}
