use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use lectureqg_core::context::{Modality, SWEEP_KS};
use lectureqg_core::corpus::{corpus_stats, load_corpus};
use lectureqg_core::endpoint::EndpointConfig;
use lectureqg_core::ingest::{CaptionOptions, HttpPunctuation, KeyframeParams, PunctuationRestorer, DEFAULT_DELTA, DEFAULT_SKIP_N};
use lectureqg_core::metrics::NliMode;
use lectureqg_harness::bench::{build_scorer, cmd_benchmark_metrics};
use lectureqg_harness::config::NliConfig;
use lectureqg_harness::engine::build_client;
use lectureqg_harness::ingest::{cmd_caption, cmd_ingest, parse_crop, FrameInput, IngestRequest};
use lectureqg_harness::run::{assemble, cmd_run, read_manifest, write_manifest, RunManifest, RunOptions};
use lectureqg_harness::serve::{serve, AppState};
use lectureqg_harness::sweep::cmd_sweep_window;
use lectureqg_harness::{Engine, HarnessError, RunConfig};

/// Exit status for invalid invocations.
const EXIT_USAGE: u8 = 2;
/// Exit status when some units failed in a way a rerun may fix.
const EXIT_RETRY: u8 = 3;

#[derive(Parser)]
#[command(name = "lectureqg", version, about = "Lecture-grounded quiz question generation experiments")]
struct Cli {
    /// Log verbosity (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Add or update one lecture in a corpus directory.
    Ingest(IngestArgs),
    /// Caption keyframes with the configured vision model.
    Caption(CaptionArgs),
    /// Run every (generator, strategy, item) unit and write the reports.
    Run(RunArgs),
    /// Sweep the Rule-k window and record the best k per model and modality.
    SweepWindow(SweepArgs),
    /// Benchmark metrics on labeled question-pair files.
    BenchmarkMetrics(BenchArgs),
    /// Rebuild a run's reports, or print corpus statistics.
    Report(ReportArgs),
    /// Serve the JSON API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration (TOML or JSON). LQG_* variables override it.
    #[arg(short, long)]
    config: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    lecture: String,
    /// Transcript JSONL with start_s, end_s and text per segment.
    #[arg(long)]
    transcript: PathBuf,
    /// Lecture video; frames are dumped with ffmpeg.
    #[arg(long, conflicts_with = "frames")]
    video: Option<PathBuf>,
    /// Directory of already decoded frames, in name order.
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Quiz JSONL to copy into the lecture.
    #[arg(long)]
    quiz: Option<PathBuf>,
    /// Frame rate of the frame sequence.
    #[arg(long, default_value_t = 1.0)]
    fps: f64,
    /// Frames skipped between comparisons.
    #[arg(long, default_value_t = DEFAULT_SKIP_N)]
    skip_n: usize,
    /// Hamming distance above which a frame counts as a new slide.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: u32,
    /// Slide region as x,y,w,h.
    #[arg(long, value_parser = parse_crop_arg)]
    crop: Option<lectureqg_core::corpus::CropRect>,
    /// Lecture duration; defaults to the end of the last segment.
    #[arg(long)]
    duration: Option<f64>,
    /// Course name, used when the corpus manifest does not exist yet.
    #[arg(long)]
    course: Option<String>,
    /// Punctuation restoration service for unpunctuated ASR output.
    #[arg(long, env = "LQG_PUNCTUATION_ENDPOINT")]
    punctuation_endpoint: Option<String>,
    /// Redo stages whose output already exists.
    #[arg(long)]
    force: bool,
}

fn parse_crop_arg(s: &str) -> Result<lectureqg_core::corpus::CropRect, String> {
    parse_crop(s).map_err(|e| e.to_string())
}

#[derive(Args)]
struct CaptionArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Caption only this lecture.
    #[arg(long)]
    lecture: Option<String>,
    /// Re-caption frames that already have a caption.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Recompute scores of finished units.
    #[arg(long)]
    rescore: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Window sizes to evaluate.
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
}

#[derive(Args)]
struct BenchArgs {
    /// Pair files (JSONL with q1, q2, label and optional source).
    #[arg(long = "pairs", required = true, num_args = 1..)]
    pairs: Vec<PathBuf>,
    /// Scorers: rouge-l, bleu, bleu-1..4, nli, or a configured similarity endpoint.
    #[arg(long, value_delimiter = ',', default_value = "rouge-l,bleu")]
    scorers: Vec<String>,
    /// Fixed decision threshold.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 8)]
    concurrency: usize,
    /// Configuration supplying NLI and similarity endpoints.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// NLI endpoint; overrides the configuration.
    #[arg(long, env = "LQG_NLI_ENDPOINT")]
    nli_endpoint: Option<String>,
    /// Directory for benchmark.md and benchmark.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ReportArgs {
    /// Run output directory to rebuild from its unit files.
    #[arg(long)]
    run: Option<PathBuf>,
    /// Corpus directory to summarize.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Directory whose subdirectories are run outputs.
    #[arg(long)]
    runs: Option<PathBuf>,
    /// Front-end build to serve at the root.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
}

fn load_config(path: &Path) -> Result<RunConfig, HarnessError> {
    let mut config = RunConfig::load(path)?;
    config.apply_env()?;
    Ok(config)
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

async fn ingest(args: IngestArgs) -> anyhow::Result<ExitCode> {
    let mut params = KeyframeParams::new(args.fps);
    params.skip_n = args.skip_n;
    params.delta = args.delta;
    params.crop = args.crop;
    let req = IngestRequest {
        corpus: args.corpus,
        lecture_id: args.lecture,
        course: args.course,
        transcript: args.transcript,
        frames: args.video.map(FrameInput::Video).or(args.frames.map(FrameInput::Frames)),
        quiz: args.quiz,
        params,
        duration_s: args.duration,
        force: args.force,
    };
    let restorer = args
        .punctuation_endpoint
        .map(|url| HttpPunctuation::new(EndpointConfig::new(url)));
    let outcome = cmd_ingest(&req, restorer.as_ref().map(|r| r as &dyn PunctuationRestorer)).await?;
    println!("{outcome}");
    Ok(ExitCode::SUCCESS)
}

async fn caption(args: CaptionArgs) -> anyhow::Result<ExitCode> {
    let config = load_config(&args.config.config)?;
    let captioner = config
        .captioner
        .as_ref()
        .ok_or_else(|| HarnessError::Usage("the configuration has no [captioner] section".into()))?;
    let client = build_client(captioner, &config.cache_root(), config.cache_mode)?;
    let options = CaptionOptions {
        force: args.force,
        concurrency: config.workers,
    };
    let summary = cmd_caption(&config.corpus, args.lecture.as_deref(), &client, options).await?;
    print_json(&summary);
    Ok(if summary.failed > 0 { ExitCode::from(EXIT_RETRY) } else { ExitCode::SUCCESS })
}

async fn run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let config = load_config(&args.config.config)?;
    let engine = Engine::from_config(&config)?;
    let strategies = config.resolved_strategies()?;
    let out = config.output.clone();
    write_manifest(
        &out,
        &RunManifest {
            config: config.clone(),
            strategies: strategies.clone(),
            models: engine.model_names(),
        },
    )?;
    let (stats, _) = cmd_run(&engine, &strategies, &out, RunOptions { rescore: args.rescore }).await?;
    print_json(&stats);
    eprintln!("report: {}", out.join("report.md").display());
    if stats.retryable > 0 {
        eprintln!("{} unit(s) failed on the model service; rerun to retry them", stats.retryable);
        return Ok(ExitCode::from(EXIT_RETRY));
    }
    Ok(ExitCode::SUCCESS)
}

async fn sweep(args: SweepArgs) -> anyhow::Result<ExitCode> {
    let config = load_config(&args.config.config)?;
    let engine = Engine::from_config(&config)?;
    let ks = args.ks.unwrap_or_else(|| SWEEP_KS.to_vec());
    let modalities: Vec<Modality> = config.modalities.clone();
    let result = cmd_sweep_window(&engine, &ks, &modalities, &config.output).await?;
    for e in &result.rule_best.entries {
        println!("{} {}: k={} (NLI@5 {:.2})", e.model, e.modality, e.k, e.nli_at5 * 100.0);
    }
    eprintln!("sweep: {}", config.output.join(lectureqg_harness::sweep::SWEEP_CSV).display());
    Ok(if result.stats.retryable > 0 { ExitCode::from(EXIT_RETRY) } else { ExitCode::SUCCESS })
}

async fn benchmark(args: BenchArgs) -> anyhow::Result<ExitCode> {
    let mut config = match &args.config {
        Some(p) => Some(load_config(p)?),
        None => None,
    };
    let mut nli = config.as_mut().and_then(|c| c.nli.take());
    if let Some(url) = args.nli_endpoint {
        match &mut nli {
            Some(n) => n.endpoint.url = url,
            None => {
                nli = Some(NliConfig {
                    endpoint: EndpointConfig::new(url),
                    mode: NliMode::default(),
                })
            }
        }
    }
    let similarity = config.map(|c| c.similarity).unwrap_or_default();
    let scorers = args
        .scorers
        .iter()
        .map(|s| build_scorer(s, nli.as_ref(), &similarity))
        .collect::<Result<Vec<_>, _>>()?;
    let (_, md) = cmd_benchmark_metrics(&args.pairs, &scorers, args.threshold, args.concurrency, args.out.as_deref()).await?;
    print!("{md}");
    Ok(ExitCode::SUCCESS)
}

fn report(args: ReportArgs) -> anyhow::Result<ExitCode> {
    if let Some(dir) = args.run {
        let manifest = read_manifest(&dir)?;
        let corpus = load_corpus(&manifest.config.corpus)?;
        assemble(&corpus, &manifest.models, &manifest.strategies, &dir)?;
        print!("{}", std::fs::read_to_string(dir.join("report.md")).context("reading report.md")?);
    } else if let Some(root) = args.corpus {
        let corpus = load_corpus(&root)?;
        let stats = corpus_stats(&corpus)?;
        println!("# {}\n", corpus.course);
        print!("{}", stats.to_markdown());
    }
    Ok(ExitCode::SUCCESS)
}

async fn serve_cmd(args: ServeArgs) -> anyhow::Result<ExitCode> {
    let config = load_config(&args.config.config)?;
    let engine = Engine::from_config(&config)?;
    let state = Arc::new(AppState::new(engine, config.corpus.clone(), args.runs));
    serve(args.addr, state, args.static_dir).await.context("server")?;
    Ok(ExitCode::SUCCESS)
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Ingest(a) => ingest(a).await,
        Command::Caption(a) => caption(a).await,
        Command::Run(a) => run(a).await,
        Command::SweepWindow(a) => sweep(a).await,
        Command::BenchmarkMetrics(a) => benchmark(a).await,
        Command::Report(a) => report(a),
        Command::Serve(a) => serve_cmd(a).await,
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<HarnessError>().is_some_and(HarnessError::is_usage);
            ExitCode::from(if usage { EXIT_USAGE } else { 1 })
        }
    }
}
