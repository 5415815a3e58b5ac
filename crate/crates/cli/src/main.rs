use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mtprep::bleu::Tokenizer;
use mtprep::mix::MixRatio;
use mtprep::pipeline::{
    run_pipeline, write_json, BleuStage, FilterBitextStage, FilterMonoStage, LangidTrainStage, LmScoreStage,
    LmTrainStage, MixStage, PipelineConfig, PostprocessStage, RerankStage, SelectStage, Stage, TuneStage,
    DEFAULT_SEED,
};
use mtprep::postprocess::QuoteStyle;
use mtprep::rerank::SearchRanges;
use mtprep::Error;

/// Corpus filtering, data selection, mixing, n-best reranking and BLEU.
#[derive(Parser)]
#[command(name = "mtprep", version)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drop empty, over-long, unbalanced and wrong-language sentence pairs.
    FilterBitext(FilterBitextArgs),
    /// Drop empty, over-long and wrong-language monolingual sentences.
    FilterMono(FilterMonoArgs),
    /// Train a character n-gram language identifier.
    LangidTrain(LangidTrainArgs),
    /// Train a Kneser-Ney n-gram LM and write it as ARPA.
    LmTrain(LmTrainArgs),
    /// Score sentences with an ARPA model.
    LmScore(LmScoreArgs),
    /// Cross-entropy difference (Moore-Lewis) data selection.
    Select(SelectArgs),
    /// Mix bitext with synthetic pairs at a fixed ratio.
    Mix(MixArgs),
    /// Pick the best hypothesis of each n-best list.
    Rerank(RerankArgs),
    /// Random search for reranking weights against BLEU.
    Tune(TuneArgs),
    /// Corpus BLEU of a hypothesis file against one reference.
    Bleu(BleuArgs),
    /// Convert English double quotes to German ones.
    Postprocess(PostprocessArgs),
    /// Run a pipeline config end to end.
    Run(RunArgs),
}

#[derive(Args)]
struct FilterBitextArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    tgt: PathBuf,
    #[arg(long)]
    out_src: PathBuf,
    #[arg(long)]
    out_tgt: PathBuf,
    #[arg(long, default_value_t = 250)]
    max_tokens: usize,
    #[arg(long, default_value_t = 1.5)]
    max_ratio: f64,
    #[arg(long, default_value = "en")]
    src_lang: String,
    #[arg(long, default_value = "de")]
    tgt_lang: String,
    /// Without a model the language rule is skipped.
    #[arg(long)]
    langid_model: Option<PathBuf>,
    #[arg(long)]
    min_margin: Option<f64>,
    #[arg(long, alias = "report")]
    stats_out: Option<PathBuf>,
}

#[derive(Args)]
struct FilterMonoArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    #[arg(long)]
    lang: String,
    #[arg(long, default_value_t = 250)]
    max_tokens: usize,
    #[arg(long)]
    langid_model: Option<PathBuf>,
    #[arg(long)]
    min_margin: Option<f64>,
    #[arg(long, alias = "report")]
    stats_out: Option<PathBuf>,
}

#[derive(Args)]
struct LangidTrainArgs {
    /// LANG=FILE, once per language.
    #[arg(long = "corpus", required = true, value_parser = parse_lang_file)]
    corpora: Vec<(String, PathBuf)>,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct LmTrainArgs {
    #[arg(long)]
    text: PathBuf,
    #[arg(long, default_value_t = 5)]
    order: usize,
    #[arg(long, default_value_t = 1)]
    min_count: u64,
    /// Build a closed vocabulary from these files (repeatable).
    #[arg(long)]
    vocab_from: Vec<PathBuf>,
    #[arg(long)]
    arpa_out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct LmScoreArgs {
    #[arg(long)]
    arpa: PathBuf,
    #[arg(long)]
    text: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    in_lm: PathBuf,
    #[arg(long)]
    out_lm: PathBuf,
    #[arg(long)]
    text: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    cutoff: f64,
    #[arg(long)]
    target_fraction: Option<f64>,
    #[arg(long)]
    scores_out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct MixArgs {
    #[arg(long)]
    bitext_src: PathBuf,
    #[arg(long)]
    bitext_tgt: PathBuf,
    #[arg(long)]
    synth_src: PathBuf,
    #[arg(long)]
    synth_tgt: PathBuf,
    #[arg(long)]
    out_src: PathBuf,
    #[arg(long)]
    out_tgt: PathBuf,
    #[arg(long, default_value = "1:1", value_parser = parse_from_str::<MixRatio>)]
    ratio: MixRatio,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    no_shuffle: bool,
    /// Prefix for the source side of synthetic pairs.
    #[arg(long)]
    mark_synthetic: Option<String>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct RerankArgs {
    #[arg(long)]
    nbest: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    nbest: PathBuf,
    #[arg(long)]
    refs: PathBuf,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "13a", value_parser = parse_from_str::<Tokenizer>)]
    tok: Tokenizer,
    #[arg(long, default_value = "0:2", value_parser = parse_range)]
    lambda1_range: (f64, f64),
    #[arg(long, default_value = "0:2", value_parser = parse_range)]
    lambda2_range: (f64, f64),
    #[arg(long, default_value = "0:1", value_parser = parse_range)]
    length_penalty_range: (f64, f64),
    /// Name recorded in the weights file.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    weights_out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BleuArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, default_value = "13a", value_parser = parse_from_str::<Tokenizer>)]
    tok: Tokenizer,
    #[arg(long, alias = "report")]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct PostprocessArgs {
    #[arg(long, default_value = "german", value_parser = parse_from_str::<QuoteStyle>)]
    quotes: QuoteStyle,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
}

fn parse_from_str<T>(s: &str) -> Result<T, String>
where
    T: std::str::FromStr<Err = Error>,
{
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_lang_file(s: &str) -> Result<(String, PathBuf), String> {
    let (lang, path) = s.split_once('=').ok_or("expected LANG=FILE")?;
    if lang.is_empty() {
        return Err("empty language code".into());
    }
    Ok((lang.to_string(), PathBuf::from(path)))
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo: f64 = lo.parse().map_err(|_| format!("bad lower bound {lo:?}"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("bad upper bound {hi:?}"))?;
    Ok((lo, hi))
}

/// The stage a subcommand stands for, plus where its report goes.
fn into_stage(command: Command) -> (Stage, Option<PathBuf>) {
    match command {
        Command::FilterBitext(a) => (
            Stage::FilterBitext(FilterBitextStage {
                src: a.src,
                tgt: a.tgt,
                out_src: a.out_src,
                out_tgt: a.out_tgt,
                langid_model: a.langid_model,
                max_tokens: a.max_tokens,
                max_ratio: a.max_ratio,
                src_lang: a.src_lang,
                tgt_lang: a.tgt_lang,
                min_margin: a.min_margin,
            }),
            a.stats_out,
        ),
        Command::FilterMono(a) => (
            Stage::FilterMono(FilterMonoStage {
                input: a.input,
                output: a.output,
                lang: a.lang,
                langid_model: a.langid_model,
                max_tokens: a.max_tokens,
                min_margin: a.min_margin,
            }),
            a.stats_out,
        ),
        Command::LangidTrain(a) => (
            Stage::LangidTrain(LangidTrainStage {
                corpora: a.corpora.into_iter().collect(),
                model_out: a.model_out,
                order: a.order,
            }),
            a.report,
        ),
        Command::LmTrain(a) => (
            Stage::LmTrain(LmTrainStage {
                text: a.text,
                arpa_out: a.arpa_out,
                order: a.order,
                min_count: a.min_count,
                vocab_from: a.vocab_from,
            }),
            a.report,
        ),
        Command::LmScore(a) => (
            Stage::LmScore(LmScoreStage {
                arpa: a.arpa,
                text: a.text,
                out: a.out,
            }),
            a.report,
        ),
        Command::Select(a) => (
            Stage::Select(SelectStage {
                in_lm: a.in_lm,
                out_lm: a.out_lm,
                text: a.text,
                output: a.output,
                cutoff: a.cutoff,
                target_fraction: a.target_fraction,
                scores_out: a.scores_out,
            }),
            a.report,
        ),
        Command::Mix(a) => (
            Stage::Mix(MixStage {
                bitext_src: a.bitext_src,
                bitext_tgt: a.bitext_tgt,
                synth_src: a.synth_src,
                synth_tgt: a.synth_tgt,
                out_src: a.out_src,
                out_tgt: a.out_tgt,
                ratio: a.ratio,
                seed: Some(a.seed),
                shuffle: !a.no_shuffle,
                mark_synthetic: a.mark_synthetic,
            }),
            a.report,
        ),
        Command::Rerank(a) => (
            Stage::Rerank(RerankStage {
                nbest: a.nbest,
                weights: a.weights,
                output: a.output,
            }),
            a.report,
        ),
        Command::Tune(a) => (
            Stage::Tune(TuneStage {
                nbest: a.nbest,
                refs: a.refs,
                weights_out: a.weights_out,
                samples: a.samples,
                seed: Some(a.seed),
                tokenizer: a.tok,
                ranges: SearchRanges {
                    lambda1: a.lambda1_range,
                    lambda2: a.lambda2_range,
                    length_penalty: a.length_penalty_range,
                },
                dataset: a.dataset,
                expected_nbest: mtprep::rerank::EXPECTED_NBEST_SIZE,
            }),
            a.report,
        ),
        Command::Bleu(a) => (
            Stage::Bleu(BleuStage {
                hyp: a.hyp,
                reference: a.reference,
                tokenizer: a.tok,
            }),
            a.json_out,
        ),
        Command::Postprocess(a) => (
            Stage::Postprocess(PostprocessStage {
                input: a.input,
                output: a.output,
                quotes: a.quotes,
            }),
            a.report,
        ),
        Command::Run(_) => unreachable!("handled separately"),
    }
}

fn run_single(stage: Stage, report: Option<&Path>) -> mtprep::Result<()> {
    let mut problems = stage.parameter_errors();
    for input in stage.inputs() {
        if !input.exists() {
            problems.push(format!("input {} does not exist", input.display()));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    let value = stage.run(DEFAULT_SEED)?;
    match report {
        Some(path) => write_json(&value, path),
        None => {
            println!("{}", serde_json::to_string_pretty(&value)?);
            Ok(())
        }
    }
}

fn execute(command: Command) -> mtprep::Result<()> {
    match command {
        Command::Run(a) => {
            let cfg = PipelineConfig::load(&a.config)?;
            let manifest = run_pipeline(&cfg)?;
            log::info!(
                "pipeline finished: {} stages, reports in {}",
                manifest.stages.len(),
                cfg.report_dir.display()
            );
            Ok(())
        }
        other => {
            let (stage, report) = into_stage(other);
            run_single(stage, report.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
