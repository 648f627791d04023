//! The command-line interface.
//!
//! Subcommands cover the whole workflow: corpus statistics, balancing,
//! splitting, training, classification, rewriting, the combined pipeline,
//! evaluation, and the HTTP server. Results go to stdout as JSON; progress
//! and diagnostics go to stderr as JSON lines.
//!
//! Exit codes: `0` success (including `--help`/`--version`), `1` usage or
//! configuration errors, `2` runtime failures.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{ArgGroup, Args, Parser, Subcommand};
use serde_json::json;

use debias_core::classifier::{predict_with_threshold, train, ClassifierModel, TrainConfig};
use debias_core::corpus::{
    balance, compute_stats, split, BalanceConfig, BalanceTarget, Corpus, Label,
};
use debias_core::features::FeatureConfig;
use debias_core::generation::debias as debias_text;
use debias_core::pipeline::{batch_process, evaluate_corpus, DebiasContext, OutcomeRecord};

use crate::config::{self, AppConfig, BackendKind};
use crate::dataset::{self, DataFormat, DatasetError};
use crate::logging::Logger;
use crate::model_file::save_model;
use crate::server;
use crate::setup;

#[derive(Debug, Parser)]
#[command(
    name = "debias",
    version,
    about = "Two-stage content moderation: classify hate speech, then rewrite it."
)]
pub struct Cli {
    #[command(flatten)]
    pub globals: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags that mirror config keys. A flag given here wins over the
/// environment and the config file.
#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Config file (overrides the DEBIAS_CONFIG environment variable).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Trained model file.
    #[arg(long, global = true, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Generation backend.
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Remote completion endpoint URL.
    #[arg(long, global = true, value_name = "URL")]
    pub backend_url: Option<String>,
    /// Extra redaction terms for the mock backend, one per line.
    #[arg(long, global = true, value_name = "PATH")]
    pub backend_lexicon: Option<PathBuf>,
    /// Prompt template file.
    #[arg(long, global = true, value_name = "PATH")]
    pub template: Option<PathBuf>,
    /// Few-shot example bank (JSONL).
    #[arg(long, global = true, value_name = "PATH")]
    pub bank: Option<PathBuf>,
    /// Decision threshold on p_hate, strictly between 0 and 1.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Few-shot examples per prompt.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Sampling temperature sent to the backend.
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    /// Completion length cap sent to the backend.
    #[arg(long, global = true, value_name = "N")]
    pub max_new_tokens: Option<usize>,
    /// Per-attempt backend timeout.
    #[arg(long, global = true, value_name = "MS")]
    pub timeout_ms: Option<u64>,
    /// Retries after a failed generation attempt.
    #[arg(long, global = true, value_name = "N")]
    pub max_retries: Option<u32>,
    /// Do not re-score rewritten text with the classifier.
    #[arg(long, global = true)]
    pub no_reclassify: bool,
    /// Error out instead of passing the original through when the backend
    /// fails (single-text runs only; batches always fail open).
    #[arg(long, global = true)]
    pub fail_closed: bool,
    /// Server bind address.
    #[arg(long, global = true, value_name = "ADDR")]
    pub listen: Option<String>,
    /// Log verbosity: debug, info, warn, or error.
    #[arg(long, global = true, value_name = "LEVEL")]
    pub log_level: Option<String>,
}

impl GlobalArgs {
    /// The highest-precedence config layer: only flags actually given.
    pub fn override_map(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        let mut put = |key: &str, value: Option<String>| {
            if let Some(value) = value {
                map.insert(key.to_string(), value);
            }
        };
        put(
            "model_path",
            self.model.as_ref().map(|p| p.display().to_string()),
        );
        put(
            "backend",
            self.backend.map(|b| {
                match b {
                    BackendKind::Mock => "mock",
                    BackendKind::Remote => "remote",
                }
                .to_string()
            }),
        );
        put("backend.url", self.backend_url.clone());
        put(
            "backend.lexicon",
            self.backend_lexicon.as_ref().map(|p| p.display().to_string()),
        );
        put(
            "template_path",
            self.template.as_ref().map(|p| p.display().to_string()),
        );
        put(
            "bank_path",
            self.bank.as_ref().map(|p| p.display().to_string()),
        );
        put("pipeline.threshold", self.threshold.map(|v| v.to_string()));
        put("pipeline.k", self.k.map(|v| v.to_string()));
        put(
            "pipeline.temperature",
            self.temperature.map(|v| v.to_string()),
        );
        put(
            "pipeline.max_new_tokens",
            self.max_new_tokens.map(|v| v.to_string()),
        );
        put("pipeline.timeout_ms", self.timeout_ms.map(|v| v.to_string()));
        put(
            "pipeline.max_retries",
            self.max_retries.map(|v| v.to_string()),
        );
        put(
            "pipeline.reclassify",
            self.no_reclassify.then(|| "false".to_string()),
        );
        put(
            "pipeline.fail_closed",
            self.fail_closed.then(|| "true".to_string()),
        );
        put("server.listen_addr", self.listen.clone());
        put("log_level", self.log_level.clone());
        map
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-class corpus statistics as JSON.
    Stats(StatsArgs),
    /// Equalize class counts by seeded over/undersampling.
    Balance(BalanceArgs),
    /// Seeded stratified train/eval split.
    Split(SplitArgs),
    /// Train the classifier and write a model file.
    Train(TrainArgs),
    /// Score texts with a trained model.
    Classify(ClassifyArgs),
    /// Rewrite texts with the generation backend (no classifier gate).
    Debias(DebiasArgs),
    /// Full pipeline: classify, rewrite flagged texts, re-score.
    Run(RunArgs),
    /// Evaluate the full pipeline against labeled data.
    Evaluate(EvaluateArgs),
    /// Serve the HTTP API.
    Serve,
}

fn parse_target(value: &str) -> Result<BalanceTarget, String> {
    if value.eq_ignore_ascii_case("auto") {
        return Ok(BalanceTarget::Auto);
    }
    value
        .parse::<usize>()
        .map(BalanceTarget::Exact)
        .map_err(|_| format!("expected \"auto\" or a positive count, got {value:?}"))
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Labeled data file (.csv or .jsonl).
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Override the format inferred from the file extension.
    #[arg(long, value_enum)]
    pub format: Option<DataFormat>,
}

#[derive(Debug, Args)]
pub struct BalanceArgs {
    /// Labeled data file (.csv or .jsonl).
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Output file; format inferred from its extension unless --format.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Per-class target: "auto" (midpoint of the counts) or a count.
    #[arg(long, default_value = "auto", value_parser = parse_target)]
    pub target: BalanceTarget,
    /// Resampling seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the format inferred from file extensions.
    #[arg(long, value_enum)]
    pub format: Option<DataFormat>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Labeled data file (.csv or .jsonl).
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Output file for the training portion.
    #[arg(long, value_name = "PATH")]
    pub train_out: PathBuf,
    /// Output file for the held-out portion.
    #[arg(long, value_name = "PATH")]
    pub eval_out: PathBuf,
    /// Fraction held out per class, strictly between 0 and 1.
    #[arg(long, default_value_t = 0.2)]
    pub eval_fraction: f64,
    /// Shuffle seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the format inferred from file extensions.
    #[arg(long, value_enum)]
    pub format: Option<DataFormat>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled training data (.csv or .jsonl).
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Output model file.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Passes over the data [default: 3].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam step size [default: 5e-5].
    #[arg(long, value_name = "RATE")]
    pub learning_rate: Option<f64>,
    /// Decoupled weight decay [default: 0.5].
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Examples per gradient step [default: 16].
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Epoch shuffle seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hashed feature space size; a power of two [default: 262144].
    #[arg(long, value_name = "N")]
    pub dimension: Option<usize>,
    /// Token truncation length [default: 128].
    #[arg(long, value_name = "N")]
    pub max_tokens: Option<usize>,
    /// Visit examples in file order every epoch.
    #[arg(long)]
    pub no_shuffle: bool,
    /// Record the wall-clock finish time in the model file. Off by default
    /// so identical runs produce byte-identical files.
    #[arg(long)]
    pub stamp_time: bool,
    /// Override the format inferred from the file extension.
    #[arg(long, value_enum)]
    pub format: Option<DataFormat>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["text", "input"])))]
pub struct ClassifyArgs {
    /// One text given inline.
    #[arg(long)]
    pub text: Option<String>,
    /// Batch file: JSONL objects with a "text" key, or plain lines.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["text", "input"])))]
pub struct DebiasArgs {
    /// One text given inline.
    #[arg(long)]
    pub text: Option<String>,
    /// Batch file: JSONL objects with a "text" key, or plain lines.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Seed for prompt selection and retry jitter.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["text", "input"])))]
pub struct RunArgs {
    /// One text given inline.
    #[arg(long)]
    pub text: Option<String>,
    /// Batch file: JSONL objects with a "text" key, or plain lines.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Seed for prompt selection and retry jitter.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the aggregate bias report JSON here.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Labeled data file (.csv or .jsonl).
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Override the format inferred from the file extension.
    #[arg(long, value_enum)]
    pub format: Option<DataFormat>,
    /// Write per-item pipeline outcomes here as JSONL.
    #[arg(long, value_name = "PATH")]
    pub outcomes: Option<PathBuf>,
    /// Seed for prompt selection and retry jitter.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Entry point: parse, resolve config, dispatch, translate to an exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(error) => {
            let code = match error.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            // clap routes help/version to stdout and real errors to stderr.
            let _ = error.print();
            return code;
        }
    };
    run_cli(cli, &config::host_env())
}

/// Like [`main_entry`] but with the environment injected, so tests can run
/// hermetically.
pub fn run_cli(cli: Cli, env: &BTreeMap<String, String>) -> i32 {
    let mut overrides = cli.globals.override_map();
    command_overrides(&cli.command, &mut overrides);

    let app = match config::load(cli.globals.config.as_deref(), env, &overrides) {
        Ok(app) => app,
        Err(error) => {
            Logger::default().error("config_error", json!({ "error": error.to_string() }));
            return 1;
        }
    };
    let logger = Logger::new(app.log_level);
    match dispatch(cli.command, &app, logger) {
        Ok(()) => 0,
        Err(error) => {
            logger.error("command_failed", json!({ "error": format!("{error:#}") }));
            2
        }
    }
}

/// Folds subcommand-level settings into the config override layer.
fn command_overrides(command: &Command, map: &mut BTreeMap<String, String>) {
    let seed = match command {
        Command::Debias(args) => args.seed,
        Command::Run(args) => args.seed,
        Command::Evaluate(args) => args.seed,
        _ => None,
    };
    if let Some(seed) = seed {
        map.insert("pipeline.seed".to_string(), seed.to_string());
    }
}

fn dispatch(command: Command, app: &AppConfig, logger: Logger) -> anyhow::Result<()> {
    match command {
        Command::Stats(args) => cmd_stats(args),
        Command::Balance(args) => cmd_balance(args, logger),
        Command::Split(args) => cmd_split(args, logger),
        Command::Train(args) => cmd_train(args, logger),
        Command::Classify(args) => cmd_classify(args, app),
        Command::Debias(args) => cmd_debias(args, app),
        Command::Run(args) => cmd_run(args, app, logger),
        Command::Evaluate(args) => cmd_evaluate(args, app, logger),
        Command::Serve => server::run(app, logger),
    }
}

fn load_data(path: &Path, format: Option<DataFormat>) -> Result<Corpus, DatasetError> {
    match format {
        Some(format) => dataset::load_corpus(path, format),
        None => dataset::load_corpus_auto(path),
    }
}

fn out_format(path: &Path, flag: Option<DataFormat>) -> Result<DataFormat, DatasetError> {
    match flag {
        Some(format) => Ok(format),
        None => DataFormat::infer(path),
    }
}

fn gather_texts(text: &Option<String>, input: &Option<PathBuf>) -> anyhow::Result<Vec<String>> {
    match (text, input) {
        (Some(text), None) => Ok(vec![text.clone()]),
        (None, Some(path)) => Ok(dataset::read_texts(path)?),
        // The clap ArgGroup requires exactly one source.
        _ => unreachable!("argument group guarantees one text source"),
    }
}

fn print_json_line(value: &serde_json::Value) -> anyhow::Result<()> {
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer(&mut stdout, value)?;
    stdout.write_all(b"\n")?;
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> anyhow::Result<()> {
    let corpus = load_data(&args.data, args.format)?;
    let stats = compute_stats(&corpus);
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}

fn cmd_balance(args: BalanceArgs, logger: Logger) -> anyhow::Result<()> {
    let corpus = load_data(&args.data, args.format)?;
    let before = (corpus.count(Label::Hate), corpus.count(Label::NoHate));
    let balanced = balance(
        &corpus,
        &BalanceConfig {
            target_per_class: args.target,
            seed: args.seed,
        },
    )?;
    dataset::save_corpus(&args.out, &balanced, out_format(&args.out, args.format)?)?;
    logger.info(
        "balanced",
        json!({
            "hate_before": before.0,
            "nohate_before": before.1,
            "hate_after": balanced.count(Label::Hate),
            "nohate_after": balanced.count(Label::NoHate),
            "seed": args.seed,
        }),
    );
    print_json_line(&json!({
        "hate": balanced.count(Label::Hate),
        "nohate": balanced.count(Label::NoHate),
        "written": args.out.display().to_string(),
    }))
}

fn cmd_split(args: SplitArgs, logger: Logger) -> anyhow::Result<()> {
    let corpus = load_data(&args.data, args.format)?;
    let (train_part, eval_part) = split(&corpus, args.eval_fraction, args.seed)?;
    dataset::save_corpus(
        &args.train_out,
        &train_part,
        out_format(&args.train_out, args.format)?,
    )?;
    dataset::save_corpus(
        &args.eval_out,
        &eval_part,
        out_format(&args.eval_out, args.format)?,
    )?;
    logger.info(
        "split",
        json!({
            "total": corpus.len(),
            "train": train_part.len(),
            "eval": eval_part.len(),
            "eval_fraction": args.eval_fraction,
            "seed": args.seed,
        }),
    );
    print_json_line(&json!({
        "train": {
            "examples": train_part.len(),
            "written": args.train_out.display().to_string(),
        },
        "eval": {
            "examples": eval_part.len(),
            "written": args.eval_out.display().to_string(),
        },
    }))
}

fn cmd_train(args: TrainArgs, logger: Logger) -> anyhow::Result<()> {
    let corpus = load_data(&args.data, args.format)?;

    let mut feature_config = FeatureConfig::default();
    if let Some(dimension) = args.dimension {
        feature_config.dimension = dimension;
    }
    if let Some(max_tokens) = args.max_tokens {
        feature_config.max_tokens = max_tokens;
    }

    let defaults = TrainConfig::default();
    let train_config = TrainConfig {
        epochs: args.epochs.unwrap_or(defaults.epochs),
        learning_rate: args.learning_rate.unwrap_or(defaults.learning_rate),
        weight_decay: args.weight_decay.unwrap_or(defaults.weight_decay),
        batch_size: args.batch_size.unwrap_or(defaults.batch_size),
        seed: args.seed,
        shuffle: !args.no_shuffle,
        ..defaults
    };

    let mut final_loss = f64::NAN;
    let mut model: ClassifierModel =
        train(&corpus, &feature_config, &train_config, |epoch, mean_loss| {
            final_loss = mean_loss;
            logger.info("train_epoch", json!({ "epoch": epoch, "mean_loss": mean_loss }));
        })?;

    if args.stamp_time {
        model.trained_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
    }
    save_model(&args.out, &model)?;

    print_json_line(&json!({
        "examples": corpus.len(),
        "epochs": train_config.epochs,
        "final_loss": if final_loss.is_finite() { json!(final_loss) } else { json!(null) },
        "dimension": feature_config.dimension,
        "model": args.out.display().to_string(),
    }))
}

fn cmd_classify(args: ClassifyArgs, app: &AppConfig) -> anyhow::Result<()> {
    let model = setup::load_required_model(app)?;
    let texts = gather_texts(&args.text, &args.input)?;
    for text in &texts {
        let classification = predict_with_threshold(&model, text, app.threshold);
        print_json_line(&json!({
            "text": text,
            "label": classification.label.as_str(),
            "p_hate": classification.p_hate,
        }))?;
    }
    Ok(())
}

fn cmd_debias(args: DebiasArgs, app: &AppConfig) -> anyhow::Result<()> {
    let template = setup::load_template_or_default(app)?;
    let bank = setup::load_bank_or_default(app)?;
    let backend = setup::build_backend(app)?;
    let gen = app.generation_config();
    let texts = gather_texts(&args.text, &args.input)?;
    for text in &texts {
        let result = debias_text(text, &template, &bank, app.k, &gen, backend.as_ref())?;
        print_json_line(&json!({
            "original": result.original,
            "rewritten": result.rewritten,
            "backend": result.backend_id,
            "k": result.k_used,
            "attempts": result.attempts,
        }))?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs, app: &AppConfig, logger: Logger) -> anyhow::Result<()> {
    let model = setup::load_required_model(app)?;
    let template = setup::load_template_or_default(app)?;
    let bank = setup::load_bank_or_default(app)?;
    let backend = setup::build_backend(app)?;
    let ctx = DebiasContext::new(&template, &bank, backend.as_ref());
    let pipeline = app.pipeline_config();

    let texts = gather_texts(&args.text, &args.input)?;
    let (outcomes, report) = batch_process(&texts, &model, &ctx, &pipeline)?;
    for outcome in &outcomes {
        print_json_line(&serde_json::to_value(OutcomeRecord::from(outcome))?)?;
    }
    if let Some(path) = &args.report {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    logger.info(
        "run_complete",
        json!({
            "texts": outcomes.len(),
            "mean_p_hate_pre": report.pre,
            "mean_p_hate_post": report.post,
            "bias_reduction": report.reduction,
        }),
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs, app: &AppConfig, logger: Logger) -> anyhow::Result<()> {
    let corpus = load_data(&args.data, args.format)?;
    let model = setup::load_required_model(app)?;
    let template = setup::load_template_or_default(app)?;
    let bank = setup::load_bank_or_default(app)?;
    let backend = setup::build_backend(app)?;
    let ctx = DebiasContext::new(&template, &bank, backend.as_ref());
    let pipeline = app.pipeline_config();

    let (outcomes, report) = evaluate_corpus(&corpus, &model, &ctx, &pipeline)?;
    if let Some(path) = &args.outcomes {
        let mut file = std::fs::File::create(path)?;
        for outcome in &outcomes {
            serde_json::to_writer(&mut file, &OutcomeRecord::from(outcome))?;
            file.write_all(b"\n")?;
        }
    }
    logger.info(
        "evaluate_complete",
        json!({ "examples": corpus.len(), "f1": report.f1 }),
    );
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
