//! Command-line entry point: question generation, evaluation runs, offline
//! scoring, metrics, toy training, and the oracle self-checks.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use enteval::grpo::{
    train_toy_grpo, GrpoConfig, SyntheticQaEnv, ToyPolicy, TrainMode, TrainOptions,
    DEFAULT_TOY_FEATURE_DIM, DEFAULT_TOY_FORMAT_BIAS, DEFAULT_TOY_POOL_SIZE,
    DEFAULT_TOY_TEMPERATURE,
};
use enteval::harness::{
    emit_report, ingest, open_backend, run_eval, score_offline, write_scores_jsonl, EvalConfig,
    ReportFormat, ScoreRecord,
};
use enteval::metrics::{
    default_tie_grid, pairwise_tau_diff, plcc, srcc, MetricsError, MetricsReport, PairedScores,
    PreferenceLabel, PreferencePair,
};
use enteval::parse::Strictness;
use enteval::qgen::{
    run_qgen_batch, FileMockLlmClient, HttpLlmClient, IclExampleSet, JsonlQuestionSink, LlmClient,
    PromptRecord, QgenBatchOptions, QgenContext, QuestionRecord, RetryPolicy, TemplateSet,
    UserPrompt,
};
use enteval::scoring::{uniform_weights, ResponseRecord, ScoreMode, TokenSets};
use enteval::Dimension;

#[derive(Parser)]
#[command(
    name = "enteval",
    version,
    about = "Entity-level QA evaluation harness for generated video"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract entities from prompts and generate questions.jsonl
    Qgen(QgenArgs),
    /// Evaluate a dataset against an answer backend
    Eval(EvalArgs),
    /// Score pre-recorded responses.jsonl offline
    Score(ScoreArgs),
    /// Correlation and preference metrics from scores
    Metrics(MetricsArgs),
    /// Train the toy policy and write curve.jsonl
    TrainToy(TrainToyArgs),
    /// Run the built-in oracle self-checks
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "paper-literal")]
    PaperLiteral,
    Normalized,
}

impl From<ModeArg> for ScoreMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::PaperLiteral => ScoreMode::PaperLiteral,
            ModeArg::Normalized => ScoreMode::Normalized,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrictnessArg {
    Strict,
    Lenient,
}

impl From<StrictnessArg> for Strictness {
    fn from(s: StrictnessArg) -> Self {
        match s {
            StrictnessArg::Strict => Strictness::Strict,
            StrictnessArg::Lenient => Strictness::Lenient,
        }
    }
}

#[derive(Args)]
struct QgenArgs {
    /// prompts.jsonl: one {prompt_id, text} object per line
    #[arg(long)]
    prompts: PathBuf,
    /// LLM endpoint: mock:<dir> or an http(s) URL
    #[arg(long)]
    backend: String,
    /// Output directory for questions.jsonl and qgen-report.json
    #[arg(long)]
    out: PathBuf,
    /// In-context example set (JSON); defaults to the bundled set
    #[arg(long)]
    icl: Option<PathBuf>,
    /// Template override directory
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset directory: videos.jsonl, questions.jsonl, annotations.jsonl
    #[arg(long)]
    data: PathBuf,
    /// Answer backend: mock:<dir> or an http(s) URL
    #[arg(long)]
    backend: String,
    /// Output directory for report.json, report.md, scores.jsonl
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "normalized")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "strict")]
    strictness: StrictnessArg,
    /// Weights file: JSON {dimension: weight}; defaults to uniform 0.2
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Token sets file: JSON {yes_tokens, no_tokens}
    #[arg(long)]
    token_sets: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Response cache directory (enables resumable runs)
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, default_value = "run")]
    run_id: String,
    /// Skip logprob requests and score from hard answers only
    #[arg(long)]
    no_logprobs: bool,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    questions: PathBuf,
    #[arg(long)]
    responses: PathBuf,
    /// Output scores.jsonl path
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "normalized")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "strict")]
    strictness: StrictnessArg,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    token_sets: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// scores.jsonl produced by eval or score
    #[arg(long)]
    scores: PathBuf,
    /// refs.jsonl: {video_id, reference} per line, for SRCC/PLCC
    #[arg(long)]
    refs: Option<PathBuf>,
    /// pairs.jsonl: {pair_id, video_a, video_b, human_label}, for tau/diff
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Output metrics-report.json path
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated tie threshold grid; default 0,0.01,…,0.5
    #[arg(long)]
    tie_grid: Option<String>,
}

#[derive(Args)]
struct TrainToyArgs {
    /// Output curve.jsonl path
    #[arg(long)]
    out: PathBuf,
    /// grpo.config JSON file; defaults match the reference setup
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    /// zero or cold-start
    #[arg(long, default_value = "cold-start")]
    mode: String,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Qgen(args) => cmd_qgen(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Score(args) => cmd_score(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::TrainToy(args) => cmd_train_toy(args),
        Command::Selftest => cmd_selftest(),
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

fn load_weights(path: Option<&PathBuf>) -> Result<BTreeMap<Dimension, f64>> {
    match path {
        None => Ok(uniform_weights()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read weights {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("invalid weights {}", p.display()))
        }
    }
}

fn load_token_sets(path: Option<&PathBuf>) -> Result<TokenSets> {
    match path {
        None => Ok(TokenSets::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read token sets {}", p.display()))?;
            let sets: TokenSets = serde_json::from_str(&text)
                .with_context(|| format!("invalid token sets {}", p.display()))?;
            sets.validate()?;
            Ok(sets)
        }
    }
}

fn open_llm_client(spec: &str) -> Result<(Box<dyn LlmClient>, RetryPolicy)> {
    if let Some(dir) = spec.strip_prefix("mock:") {
        let client = FileMockLlmClient::open(dir)
            .with_context(|| format!("cannot open mock fixtures at {dir}"))?;
        Ok((Box::new(client), RetryPolicy::immediate()))
    } else if spec.starts_with("http://") || spec.starts_with("https://") {
        Ok((Box::new(HttpLlmClient::new(spec)), RetryPolicy::default()))
    } else {
        bail!("backend must be mock:<dir> or an http(s) url, got {spec:?}");
    }
}

fn cmd_qgen(args: QgenArgs) -> Result<()> {
    let records: Vec<PromptRecord> = read_jsonl(&args.prompts)?;
    let mut prompts = Vec::with_capacity(records.len());
    for record in records {
        prompts.push(UserPrompt::new(record.prompt_id, record.text)?);
    }
    let icl = match &args.icl {
        Some(path) => IclExampleSet::load(path)
            .with_context(|| format!("cannot load ICL examples {}", path.display()))?,
        None => IclExampleSet::default(),
    };
    let templates = match &args.templates {
        Some(dir) => TemplateSet::load_dir(dir)?,
        None => TemplateSet::default(),
    };
    let (client, retry) = open_llm_client(&args.backend)?;
    let ctx = QgenContext::new(client.as_ref(), &icl, &templates).retry(retry);

    std::fs::create_dir_all(&args.out)?;
    let questions_path = args.out.join("questions.jsonl");
    let mut sink = JsonlQuestionSink::create(&questions_path)?;
    let report = run_qgen_batch(
        &prompts,
        &ctx,
        &mut sink,
        &QgenBatchOptions {
            parallelism: args.parallelism,
        },
    )?;
    let report_path = args.out.join("qgen-report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    println!(
        "qgen: {} prompts, {} questions written, {} of {} cells failed",
        report.prompts_total, report.questions_written, report.cells_failed, report.cells_total
    );
    println!("  {}", questions_path.display());
    println!("  {}", report_path.display());
    if report.cells_failed > 0 {
        std::process::exit(2);
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let dataset = ingest(&args.data)?;
    let backend = open_backend(&args.backend)?;
    let mut cfg = EvalConfig::new(args.run_id.clone());
    cfg.mode = args.mode.into();
    cfg.strictness = args.strictness.into();
    cfg.weights = load_weights(args.weights.as_ref())?;
    cfg.token_sets = load_token_sets(args.token_sets.as_ref())?;
    cfg.want_logprobs = !args.no_logprobs;
    cfg.top_k = args.top_k;
    cfg.parallelism = args.parallelism;
    cfg.cache_dir = args.cache.clone();

    let run = run_eval(&dataset, backend.as_ref(), &cfg)?;
    std::fs::create_dir_all(&args.out)?;
    let json = emit_report(&run, ReportFormat::Json, &args.out)?;
    let md = emit_report(&run, ReportFormat::Markdown, &args.out)?;
    let scores = args.out.join("scores.jsonl");
    write_scores_jsonl(&run.video_scores, &scores)?;
    println!(
        "eval {}: {} questions -> {} scored, {} failed, {} videos",
        run.run_id,
        dataset.questions.len(),
        run.question_results.len(),
        run.failures.len(),
        run.video_scores.len()
    );
    for path in [&json, &md, &scores] {
        println!("  {}", path.display());
    }
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let question_records: Vec<QuestionRecord> = read_jsonl(&args.questions)?;
    let questions: Vec<_> = question_records.into_iter().map(Into::into).collect();
    let responses: Vec<ResponseRecord> = read_jsonl(&args.responses)?;
    let outcome = score_offline(
        &questions,
        &responses,
        &load_token_sets(args.token_sets.as_ref())?,
        &load_weights(args.weights.as_ref())?,
        args.mode.into(),
        args.strictness.into(),
    )?;
    write_scores_jsonl(&outcome.video_scores, &args.out)?;
    println!(
        "score: {} videos written to {}, {} questions failed",
        outcome.video_scores.len(),
        args.out.display(),
        outcome.failures.len()
    );
    for failure in &outcome.failures {
        eprintln!(
            "  failed {} ({}): {}",
            failure.question_id, failure.video_id, failure.error
        );
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct RefRecord {
    #[serde(default)]
    #[allow(dead_code)]
    schema_version: u32,
    video_id: String,
    reference: f64,
}

#[derive(serde::Deserialize)]
struct PairRecord {
    #[serde(default)]
    #[allow(dead_code)]
    schema_version: u32,
    pair_id: String,
    video_a: String,
    video_b: String,
    human_label: PreferenceLabel,
}

fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    let scores: Vec<ScoreRecord> = read_jsonl(&args.scores)?;
    let by_video: BTreeMap<&str, f64> = scores
        .iter()
        .map(|s| (s.video_id.as_str(), s.overall))
        .collect();
    let mut report = MetricsReport {
        schema_version: 1,
        srcc: None,
        plcc: None,
        tau: None,
        diff: None,
        tie_threshold: None,
        n_scores: 0,
        n_pairs: 0,
        degenerate_flags: Vec::new(),
    };

    if let Some(refs_path) = &args.refs {
        let refs: Vec<RefRecord> = read_jsonl(refs_path)?;
        let mut items = Vec::new();
        for r in &refs {
            match by_video.get(r.video_id.as_str()) {
                Some(predicted) => items.push((r.video_id.clone(), *predicted, r.reference)),
                None => report
                    .degenerate_flags
                    .push(format!("no score for reference video {}", r.video_id)),
            }
        }
        report.n_scores = items.len();
        let paired = PairedScores::new(items)?;
        match srcc(&paired) {
            Ok(v) => report.srcc = Some(v),
            Err(err @ MetricsError::DegenerateVariance(_)) => {
                report.degenerate_flags.push(format!("srcc: {err}"))
            }
            Err(err) => bail!("srcc: {err}"),
        }
        match plcc(&paired) {
            Ok(v) => report.plcc = Some(v),
            Err(err @ MetricsError::DegenerateVariance(_)) => {
                report.degenerate_flags.push(format!("plcc: {err}"))
            }
            Err(err) => bail!("plcc: {err}"),
        }
    }

    if let Some(pairs_path) = &args.pairs {
        let records: Vec<PairRecord> = read_jsonl(pairs_path)?;
        let mut pairs = Vec::new();
        for record in &records {
            let (Some(a), Some(b)) = (
                by_video.get(record.video_a.as_str()),
                by_video.get(record.video_b.as_str()),
            ) else {
                report.degenerate_flags.push(format!(
                    "pair {}: missing score for one side",
                    record.pair_id
                ));
                continue;
            };
            pairs.push(PreferencePair {
                pair_id: record.pair_id.clone(),
                score_a: *a,
                score_b: *b,
                human_label: record.human_label,
            });
        }
        report.n_pairs = pairs.len();
        let grid = match &args.tie_grid {
            Some(spec) => spec
                .split(',')
                .map(|s| s.trim().parse::<f64>().context("invalid tie grid value"))
                .collect::<Result<Vec<f64>>>()?,
            None => default_tie_grid(),
        };
        let tau_diff = pairwise_tau_diff(&pairs, &grid)?;
        report.tau = Some(tau_diff.tau);
        report.diff = tau_diff.diff;
        report.tie_threshold = Some(tau_diff.tie_threshold);
        if tau_diff.diff.is_none() {
            report
                .degenerate_flags
                .push("diff: no non-tie pairs".to_string());
        }
    }

    std::fs::write(&args.out, serde_json::to_string_pretty(&report)?)?;
    println!("metrics written to {}", args.out.display());
    Ok(())
}

fn cmd_train_toy(args: TrainToyArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => GrpoConfig::load(path)?,
        None => GrpoConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let mode: TrainMode = args.mode.parse().map_err(|e: String| anyhow::anyhow!(e))?;
    let env = SyntheticQaEnv::new(
        cfg.seed ^ 0x7,
        DEFAULT_TOY_POOL_SIZE,
        DEFAULT_TOY_FEATURE_DIM,
    );
    let mut policy = ToyPolicy::new_base(
        DEFAULT_TOY_FEATURE_DIM,
        DEFAULT_TOY_TEMPERATURE,
        DEFAULT_TOY_FORMAT_BIAS,
    );
    let curve = train_toy_grpo(
        &env,
        &mut policy,
        &cfg,
        args.steps,
        mode,
        &TrainOptions::default(),
    )?;
    let file = std::fs::File::create(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    curve.write_jsonl(std::io::BufWriter::new(file))?;
    let window = 100.min(args.steps.max(1));
    println!(
        "train-toy ({:?}, {} steps): trailing-{window} mean reward {:.3}, acc rate {:.3}, fmt rate {:.3}",
        mode,
        args.steps,
        curve.tail_mean(window, |p| p.mean_reward),
        curve.tail_mean(window, |p| p.acc_rate),
        curve.tail_mean(window, |p| p.fmt_rate),
    );
    println!("  {}", args.out.display());
    Ok(())
}

fn cmd_selftest() -> Result<()> {
    let mut out = std::io::stdout();
    let ok = enteval::selftest::run(&mut out)?;
    if !ok {
        std::process::exit(1);
    }
    Ok(())
}
