//! Command-line front end. `run` returns the process exit code.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage, 3 missing/unreadable
//! file, 4 invalid configuration or checkpoint mismatch, 5 bad data.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::baselines::{random_sentence_baseline, retrieval_sentence_baseline, BagOfWords, MeanTokenEmbedding, SentenceEmbedder};
use crate::config::{Activation, ModelConfig, Variant};
use crate::data::{
    build_vocab, gen_synthetic, read_jsonl, write_jsonl, Caps, FilterConfig, QaRecord, RawRecord, SynthSpec,
    SynthTask, Vocab, SEP,
};
use crate::decoder::{beam_decode, greedy_decode, GenerationConfig};
use crate::error::{ChimeError, Result};
use crate::metrics::{evaluate, GoldAnswers, Prediction, Report};
use crate::model::Chime;
use crate::tensor_core::{AdamW, Precision, Scalar};
use crate::trainer::{peek_checkpoint, write_metrics_csv, Checkpoint, TrainGroup, Trainer};

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;
pub const EXIT_DATA: i32 = 5;

#[derive(Parser, Debug)]
#[command(name = "chime", version, about = "Multi-passage answer generation with cross-passage memory")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic corpus.
    SynthData(SynthArgs),
    /// Filter and encode AmazonQA-style JSON lines.
    Prepare(PrepareArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Generate answers from a checkpoint.
    Generate(GenerateArgs),
    /// Score predictions against reference answers.
    Evaluate(EvaluateArgs),
    /// Run a heuristic sentence-picking baseline.
    Baseline(BaselineArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// JSON file whose keys set any flag; the command line wins.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of questions.
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    passages: usize,
    #[arg(long, default_value_t = 32)]
    vocab_size: usize,
    #[arg(long, default_value_t = 6)]
    passage_len: usize,
    #[arg(long, default_value = "mixed")]
    task: SynthTask,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Stem for the record and gold files.
    #[arg(long, default_value = "train")]
    name: String,
}

#[derive(Args, Debug)]
struct PrepareArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Raw JSON-lines input.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "records")]
    name: String,
    /// Reuse this vocabulary instead of building one.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 32000)]
    vocab_size: usize,
    #[arg(long, default_value_t = 10)]
    passages: usize,
    #[arg(long, default_value_t = 40)]
    max_question_tokens: usize,
    #[arg(long, default_value_t = 124)]
    max_passage_tokens: usize,
    #[arg(long, default_value_t = 82)]
    max_answer_tokens: usize,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    ff_inner: Option<usize>,
    #[arg(long)]
    memory_heads: Option<usize>,
    #[arg(long)]
    memory_ff_inner: Option<usize>,
    #[arg(long, value_enum)]
    activation: Option<ActivationArg>,
    #[arg(long)]
    init_std: Option<f64>,
    #[arg(long)]
    peak_lr: Option<f64>,
    #[arg(long)]
    warmup_fraction: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Question groups averaged into one optimizer step.
    #[arg(long)]
    accumulation: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    precision: Option<Precision>,
    /// Also train the decoder on the memory after every passage.
    #[arg(long)]
    per_passage_loss: bool,
    /// Token caps; inferred from the data when absent.
    #[arg(long)]
    question_cap: Option<usize>,
    #[arg(long)]
    passage_cap: Option<usize>,
    #[arg(long)]
    answer_cap: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ActivationArg {
    Gelu,
    Relu,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Encoded records from `synth-data` or `prepare`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Per-step CSV log.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop after this many steps (the schedule still spans all epochs).
    #[arg(long)]
    max_steps: Option<u64>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Predictions JSON lines.
    #[arg(long)]
    out: PathBuf,
    /// Beam width.
    #[arg(long, default_value_t = 3, conflicts_with = "greedy")]
    beam: usize,
    #[arg(long)]
    greedy: bool,
    /// Body-token limit; defaults to the answer cap.
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    length_penalty: f64,
    /// Write per-passage intermediate answers and gate statistics here.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Expected architecture; generation refuses a checkpoint that differs.
    #[arg(long)]
    expect_variant: Option<Variant>,
    #[arg(long)]
    expect_d_model: Option<usize>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// Also write the report as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum BaselineKind {
    Random,
    Retrieval,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    kind: BaselineKind,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Embed sentences with this model's token embeddings (retrieval only);
    /// bag-of-words otherwise.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

/// Turns `{"key": value}` into `--key value` arguments.
fn config_args(path: &Path) -> Result<Vec<OsString>> {
    let text = fs::read_to_string(path).map_err(|e| ChimeError::io(path, e))?;
    let v: Value = serde_json::from_str(&text)?;
    let obj = v
        .as_object()
        .ok_or_else(|| ChimeError::Argument(format!("{}: config must be a JSON object", path.display())))?;
    let mut out = Vec::new();
    for (k, val) in obj {
        let flag = format!("--{}", k.replace('_', "-"));
        let mut push = |s: String| {
            out.push(OsString::from(&flag));
            out.push(OsString::from(s));
        };
        match val {
            Value::Bool(true) => out.push(OsString::from(&flag)),
            Value::Bool(false) | Value::Null => {}
            Value::String(s) => push(s.clone()),
            Value::Number(n) => push(n.to_string()),
            _ => {
                return Err(ChimeError::Argument(format!("config key '{k}' must be a scalar")));
            }
        }
    }
    Ok(out)
}

/// Splices `--config` file contents in right after the subcommand so later
/// command-line flags override them.
fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = argv.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let extra = config_args(&path)?;
    let mut sub = argv.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')).map_or(1, |p| p + 1);
    // positional baseline kind stays ahead of flags
    if argv.get(sub).is_some_and(|a| a == "baseline") && argv.len() > sub + 1 {
        let next = argv[sub + 1].to_string_lossy();
        if !next.starts_with('-') {
            sub += 1;
        }
    }
    let mut out = argv[..=sub.min(argv.len() - 1)].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[(sub + 1).min(argv.len())..]);
    Ok(out)
}

fn error_kind(e: &ChimeError) -> (&'static str, i32) {
    match e {
        ChimeError::Io { .. } => ("io", EXIT_IO),
        ChimeError::Incompatible(_) => ("incompatible", EXIT_CONFIG),
        ChimeError::Argument(_) => ("config", EXIT_CONFIG),
        ChimeError::Parse { .. } | ChimeError::Json(_) => ("data", EXIT_DATA),
        ChimeError::MissingIds(_) => ("missing_ids", EXIT_DATA),
        ChimeError::Numeric(_) => ("numeric", EXIT_OTHER),
        ChimeError::Shape(_) => ("shape", EXIT_OTHER),
    }
}

fn report_error(kind: &str, msg: &str) {
    let one_line = msg.replace('\n', " ").replace('"', "'");
    eprintln!("error: kind={kind} msg=\"{one_line}\"");
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            let (kind, code) = error_kind(&e);
            report_error(kind, &e.to_string());
            return code;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            report_error("usage", &e.to_string().lines().next().unwrap_or("bad arguments").to_string());
            return EXIT_USAGE;
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => 0,
        Err(e) => {
            let (kind, code) = error_kind(&e);
            report_error(kind, &e.to_string());
            code
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::SynthData(a) => synth_data(a),
        Command::Prepare(a) => prepare(a),
        Command::Train(a) => {
            let p = a.model.precision.unwrap_or_default();
            match p {
                Precision::F32 => train_cmd::<f32>(a),
                Precision::F64 => train_cmd::<f64>(a),
            }
        }
        Command::Generate(a) => match peek_checkpoint(&a.checkpoint)?.precision {
            Precision::F32 => generate_cmd::<f32>(a),
            Precision::F64 => generate_cmd::<f64>(a),
        },
        Command::Evaluate(a) => {
            let r = evaluate(&a.predictions, &a.gold, a.workers)?;
            if let Some(p) = &a.csv {
                fs::write(p, Report::to_csv(std::slice::from_ref(&r))).map_err(|e| ChimeError::io(p, e))?;
            }
            print!("{}", Report::to_table(&[r]));
            Ok(())
        }
        Command::Baseline(a) => baseline_cmd(a),
    }
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| ChimeError::io(p, e))
}

fn gold_for(records: &[QaRecord], vocab: &Vocab) -> Vec<GoldAnswers> {
    records
        .iter()
        .map(|r| GoldAnswers {
            id: r.id.clone(),
            references: r.answers.iter().map(|a| vocab.decode(a)).collect(),
        })
        .collect()
}

fn synth_data(a: SynthArgs) -> Result<()> {
    let corpus = gen_synthetic(&SynthSpec {
        seed: a.seed,
        questions: a.n,
        passages: a.passages,
        vocab_size: a.vocab_size,
        passage_len: a.passage_len,
        task: a.task,
    })?;
    create_dir(&a.out)?;
    write_jsonl(a.out.join(format!("{}.jsonl", a.name)), &corpus.records)?;
    write_jsonl(a.out.join(format!("{}_gold.jsonl", a.name)), &gold_for(&corpus.records, &corpus.vocab))?;
    corpus.vocab.save(a.out.join("vocab.txt"))?;
    log::info!("wrote {} synthetic questions to {}", corpus.records.len(), a.out.display());
    Ok(())
}

fn prepare(a: PrepareArgs) -> Result<()> {
    let raw: Vec<RawRecord> = read_jsonl(&a.input)?;
    let cfg = FilterConfig {
        passages: a.passages,
        max_question_tokens: a.max_question_tokens,
        max_passage_tokens: a.max_passage_tokens,
        max_answer_tokens: a.max_answer_tokens,
    };
    let mut kept = Vec::new();
    let mut rejected: std::collections::BTreeMap<String, usize> = Default::default();
    for r in &raw {
        match crate::data::clean_record(r, &cfg) {
            Ok(c) => kept.push(c),
            Err(why) => {
                let key = why.to_string();
                let key = key.split(" (").next().unwrap_or(&key).to_string();
                *rejected.entry(key).or_default() += 1;
            }
        }
    }
    let vocab = match &a.vocab {
        Some(p) => Vocab::load(p)?,
        None => {
            let text: Vec<&str> = kept
                .iter()
                .flat_map(|r| {
                    std::iter::once(r.question_text.as_str())
                        .chain(r.review_snippets.iter().map(String::as_str))
                        .chain(r.answers.iter().map(|x| x.text.as_str()))
                })
                .collect();
            build_vocab(&text, a.vocab_size)?
        }
    };
    let records: Vec<QaRecord> = kept
        .iter()
        .enumerate()
        .filter_map(|(i, r)| QaRecord::from_raw(r, &cfg, &vocab, &format!("q{i}")).ok())
        .collect();
    create_dir(&a.out)?;
    write_jsonl(a.out.join(format!("{}.jsonl", a.name)), &records)?;
    write_jsonl(a.out.join(format!("{}_gold.jsonl", a.name)), &gold_for(&records, &vocab))?;
    vocab.save(a.out.join("vocab.txt"))?;
    for (why, n) in &rejected {
        log::info!("rejected {n}: {why}");
    }
    eprintln!("kept {} of {} records", records.len(), raw.len());
    Ok(())
}

fn infer_caps(records: &[QaRecord]) -> Caps {
    let max = |f: &dyn Fn(&QaRecord) -> usize| records.iter().map(f).max().unwrap_or(1).max(1);
    Caps {
        question: max(&|r| r.question.len()),
        passage: max(&|r| r.passages.iter().map(Vec::len).max().unwrap_or(0)),
        answer: max(&|r| r.answers.iter().map(Vec::len).max().unwrap_or(0)),
    }
}

fn build_config(m: &ModelArgs, vocab: &Vocab, records: &[QaRecord]) -> Result<ModelConfig> {
    let mut c = ModelConfig {
        vocab_size: vocab.len(),
        ..ModelConfig::default()
    };
    let caps = infer_caps(records);
    c.caps = Caps {
        question: m.question_cap.unwrap_or(caps.question),
        passage: m.passage_cap.unwrap_or(caps.passage),
        answer: m.answer_cap.unwrap_or(caps.answer),
    };
    c.passages = records.iter().map(|r| r.passages.len()).max().unwrap_or(1);
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = m.$f { c.$f = v; } )* };
    }
    set!(variant, d_model, blocks, heads, ff_inner, memory_heads, memory_ff_inner, init_std, peak_lr);
    set!(warmup_fraction, clip_norm, epochs, accumulation, seed, precision);
    if let Some(a) = m.activation {
        c.activation = match a {
            ActivationArg::Gelu => Activation::Gelu,
            ActivationArg::Relu => Activation::Relu,
        };
    }
    if let Some(wd) = m.weight_decay {
        c.optimizer = AdamW {
            weight_decay: wd,
            ..c.optimizer
        };
    }
    c.per_passage_loss = m.per_passage_loss;
    c.validate()?;
    Ok(c)
}

fn load_groups(path: &Path, vocab: &Vocab) -> Result<(Vec<QaRecord>, Vec<TrainGroup>)> {
    let records: Vec<QaRecord> = read_jsonl(path)?;
    if records.is_empty() {
        return Err(ChimeError::Parse {
            line: 0,
            msg: format!("{}: no records", path.display()),
        });
    }
    let v = vocab.len() as u32;
    if let Some(r) = records
        .iter()
        .find(|r| r.question.iter().chain(r.passages.iter().flatten()).chain(r.answers.iter().flatten()).any(|&t| t >= v))
    {
        return Err(ChimeError::Parse {
            line: 0,
            msg: format!("record {} has token ids outside the {v}-entry vocabulary", r.id),
        });
    }
    let groups = records.iter().map(TrainGroup::from_record).collect::<Result<_>>()?;
    Ok((records, groups))
}

fn train_cmd<T: Scalar>(a: TrainArgs) -> Result<()> {
    let vocab = Vocab::load(&a.vocab)?;
    let (records, groups) = load_groups(&a.data, &vocab)?;
    let mut trainer = match &a.resume {
        Some(p) => {
            let ck = Checkpoint::<T>::load(p)?;
            ck.check_config(&build_config(&a.model, &vocab, &records).map(|mut c| {
                c.caps = ck.config.caps;
                c
            })?)?;
            Trainer::resume(ck, groups)?
        }
        None => Trainer::<T>::new(build_config(&a.model, &vocab, &records)?, groups)?,
    };
    log::info!(
        "training {} ({} parameters, {} steps)",
        trainer.config().variant,
        trainer.model.num_params(),
        trainer.total_steps()
    );
    let log = trainer.run(a.max_steps)?;
    if let Some(m) = &a.metrics {
        write_metrics_csv(m, &log)?;
    }
    trainer.checkpoint().save(&a.out)?;
    if let Some(last) = log.last() {
        eprintln!("step {} loss {:.5}", last.step, last.loss);
    }
    Ok(())
}

#[derive(Serialize)]
struct TraceLine<'a> {
    id: &'a str,
    passage: usize,
    context_gate_mean: Option<f64>,
    answer_gate_mean: Option<f64>,
    intermediate_answer: String,
}

fn generate_cmd<T: Scalar>(a: GenerateArgs) -> Result<()> {
    let ck = Checkpoint::<T>::load(&a.checkpoint)?;
    let mut expect = ck.config.clone();
    if let Some(v) = a.expect_variant {
        expect.variant = v;
    }
    if let Some(d) = a.expect_d_model {
        expect.d_model = d;
    }
    ck.check_config(&expect)?;
    let vocab = Vocab::load(&a.vocab)?;
    if vocab.len() != ck.config.vocab_size {
        return Err(ChimeError::Incompatible(format!(
            "vocabulary has {} entries, checkpoint expects {}",
            vocab.len(),
            ck.config.vocab_size
        )));
    }
    let model = ck.into_model()?;
    let records: Vec<QaRecord> = read_jsonl(&a.data)?;
    let gen = GenerationConfig {
        max_len: a.max_len.unwrap_or(model.config.caps.answer),
        beam_width: if a.greedy { 1 } else { a.beam },
        end_token: SEP,
        length_penalty: a.length_penalty,
    };
    let greedy = a.greedy;
    let decode = |r: &QaRecord, passages: &[Vec<u32>]| -> Result<Vec<u32>> {
        let q = model.question(&r.question, passages);
        Ok(if greedy {
            greedy_decode(&q, &gen)?.tokens
        } else {
            beam_decode(&q, &gen)?.swap_remove(0).tokens
        })
    };
    let one = |r: &QaRecord| -> Result<(Prediction, Vec<String>)> {
        let tokens = decode(r, &r.passages)?;
        let pred = Prediction {
            id: r.id.clone(),
            text: vocab.decode(&tokens),
        };
        let mut trace = Vec::new();
        if a.trace.is_some() {
            let stats = model.trace(&r.question, &r.passages, &tokens)?;
            for (k, s) in stats.iter().enumerate() {
                let inter = decode(r, &r.passages[..=k])?;
                trace.push(serde_json::to_string(&TraceLine {
                    id: &r.id,
                    passage: k + 1,
                    context_gate_mean: s.context_gate_mean,
                    answer_gate_mean: s.answer_gate_mean,
                    intermediate_answer: vocab.decode(&inter),
                })?);
            }
        }
        Ok((pred, trace))
    };
    let results: Vec<(Prediction, Vec<String>)> = if a.workers > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(a.workers)
            .build()
            .map_err(|e| ChimeError::Argument(format!("thread pool: {e}")))?
            .install(|| records.par_iter().map(one).collect::<Result<_>>())?
    } else {
        records.iter().map(one).collect::<Result<_>>()?
    };
    let (preds, traces): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    write_jsonl(&a.out, &preds)?;
    if let Some(p) = &a.trace {
        let mut s = traces.concat().join("\n");
        s.push('\n');
        fs::write(p, s).map_err(|e| ChimeError::io(p, e))?;
    }
    Ok(())
}

fn baseline_cmd(a: BaselineArgs) -> Result<()> {
    let vocab = Vocab::load(&a.vocab)?;
    let records: Vec<QaRecord> = read_jsonl(&a.data)?;
    let texts = |r: &QaRecord| r.passages.iter().map(|p| vocab.decode(p)).collect::<Vec<_>>();
    let preds: Vec<Prediction> = match a.kind {
        BaselineKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            records
                .iter()
                .map(|r| Prediction {
                    id: r.id.clone(),
                    text: random_sentence_baseline(&texts(r), &mut rng),
                })
                .collect()
        }
        BaselineKind::Retrieval => {
            let model = match &a.checkpoint {
                Some(p) => Some(match peek_checkpoint(p)?.precision {
                    Precision::F64 => Checkpoint::<f64>::load(p)?.into_model()?,
                    Precision::F32 => {
                        let m = Checkpoint::<f32>::load(p)?.into_model()?;
                        widen(&m)?
                    }
                }),
                None => None,
            };
            let bow = BagOfWords { vocab: &vocab };
            let mean;
            let emb: &dyn SentenceEmbedder = match &model {
                Some(m) => {
                    mean = MeanTokenEmbedding { model: m, vocab: &vocab };
                    &mean
                }
                None => &bow,
            };
            records
                .iter()
                .map(|r| Prediction {
                    id: r.id.clone(),
                    text: retrieval_sentence_baseline(&vocab.decode(&r.question), &texts(r), emb),
                })
                .collect()
        }
    };
    write_jsonl(&a.out, &preds)?;
    Ok(())
}

/// Copies a 32-bit model into a 64-bit one (embedding lookups only).
fn widen(m: &Chime<f32>) -> Result<Chime<f64>> {
    let mut cfg = m.config.clone();
    cfg.precision = Precision::F64;
    let mut out = Chime::<f64>::new(cfg)?;
    let tensors = m
        .store
        .tensors()
        .iter()
        .map(|t| crate::tensor_core::Tensor::from_f64(t.shape().to_vec(), &t.to_f64_vec()))
        .collect::<Result<Vec<_>>>()?;
    out.store.load_tensors(tensors)?;
    Ok(out)
}
