//! `esmos`: corpus preparation, the listening-test service, statistics,
//! and DenseMOS training/evaluation from one binary.
//!
//! Exit status is 0 on success, 2 on usage errors (including missing input
//! files) and 1 on runtime errors.

mod commands;
mod report;
mod stats_report;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use esmos_core::exec::Execution;

#[derive(Debug, Parser)]
#[command(name = "esmos", version, about = "Spanish TTS naturalness MOS toolkit")]
struct Cli {
    /// Run batch work on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,

    /// Where to write the JSON run report; defaults to a path next to the
    /// command's main output.
    #[arg(long, global = true, value_name = "PATH")]
    report: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plan and run VTLP / Griffin-Lim augmentation jobs.
    Augment(AugmentArgs),
    /// Speaker-disjoint train/val/test split.
    Split(SplitArgs),
    /// Run the listening-test HTTP service.
    Serve(ServeArgs),
    /// Apply the post-hoc validity rules to exported ratings.
    FilterRatings(FilterArgs),
    /// MOS tables, agreement, Kruskal-Wallis and Tukey report.
    Stats(StatsArgs),
    /// Train DenseMOS on precomputed layer embeddings.
    Train(TrainArgs),
    /// Evaluate a DenseMOS checkpoint with bootstrap intervals.
    Evaluate(EvaluateArgs),
    /// Descriptive statistics of a manifest.
    CorpusStats(CorpusStatsArgs),
}

fn existing(s: &str) -> Result<PathBuf, String> {
    let p = PathBuf::from(s);
    if p.exists() {
        Ok(p)
    } else {
        Err(format!("{s}: no such file or directory"))
    }
}

fn probability(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1)"))
    }
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[arg(long, value_parser = existing)]
    manifest: PathBuf,
    /// Directory that manifest audio paths are relative to; outputs land in
    /// `<audio-root>/augmented/`.
    #[arg(long, value_parser = existing)]
    audio_root: PathBuf,
    /// Manifest with the augmented stimuli appended.
    #[arg(long)]
    out: PathBuf,
    /// Also write the planned jobs as JSONL.
    #[arg(long)]
    jobs: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    vtlp_speakers: usize,
    #[arg(long, default_value_t = 1)]
    gl_tts_speakers: usize,
    #[arg(long, default_value_t = 1)]
    gl_human_speakers: usize,
    #[arg(long, default_value_t = 100)]
    samples_per_speaker: usize,
    #[arg(long, default_value_t = 32)]
    gl_iters: usize,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long, value_parser = existing)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.8)]
    train: f64,
    #[arg(long, default_value_t = 0.1)]
    val: f64,
    #[arg(long, default_value_t = 0.1)]
    test: f64,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, value_parser = existing)]
    manifest: PathBuf,
    #[arg(long, value_parser = existing)]
    audio_root: PathBuf,
    /// Append-only event log; replayed on startup.
    #[arg(long)]
    log: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Fixes session ids and batch draws; random when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Pilot ratings JSONL used for per-stimulus quality tiers.
    #[arg(long, value_parser = existing)]
    pilot: Option<PathBuf>,
    /// JSON object mapping system id to prior MOS.
    #[arg(long, value_parser = existing)]
    system_priors: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Comparison {
    AtMost,
    Equal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Aggregation {
    AnyPair,
    Mean,
}

#[derive(Debug, Args)]
struct RuleArgs {
    /// Minimum response time as a fraction of the clip duration.
    #[arg(long, default_value_t = 0.5)]
    min_response_fraction: f64,
    #[arg(long)]
    no_timing_rule: bool,
    #[arg(long)]
    no_participant_rule: bool,
    #[arg(long, value_enum, default_value_t = Comparison::AtMost)]
    human_comparison: Comparison,
    #[arg(long, value_enum, default_value_t = Aggregation::AnyPair)]
    human_aggregation: Aggregation,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(long, value_parser = existing)]
    ratings: PathBuf,
    #[arg(long, value_parser = existing)]
    manifest: PathBuf,
    /// Valid ratings, with every input field preserved.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    rules: RuleArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Grouping {
    System,
    Speaker,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlphaKind {
    Interval,
    Ordinal,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long, value_parser = existing)]
    ratings: PathBuf,
    #[arg(long, value_parser = existing)]
    manifest: PathBuf,
    /// Report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Plot data (group, mean, sd, bin); defaults to the report path with a
    /// `.csv` extension.
    #[arg(long)]
    plot_csv: Option<PathBuf>,
    /// Grouping for the MOS table, agreement and bins.
    #[arg(long, value_enum, default_value_t = Grouping::System)]
    group_by: Grouping,
    /// Grouping for the Kruskal-Wallis test.
    #[arg(long, value_enum, default_value_t = Grouping::Speaker)]
    kw_group_by: Grouping,
    #[arg(long, value_enum, default_value_t = AlphaKind::Interval)]
    alpha_metric: AlphaKind,
    #[arg(long, default_value_t = 5)]
    bins: usize,
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long, value_parser = existing)]
    ratings: PathBuf,
    /// Split assignment JSONL.
    #[arg(long, value_parser = existing)]
    split: PathBuf,
    /// Directory of `<stimulus_id>.emb1` files.
    #[arg(long, value_parser = existing)]
    emb_dir: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint path; a `.json` sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.001)]
    lr_alpha: f64,
    #[arg(long, default_value_t = 0.0001)]
    lr_mlp: f64,
    #[arg(long, default_value_t = 0.6)]
    dropout: f64,
    #[arg(long, default_value_t = 40)]
    patience: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1000)]
    max_epochs: usize,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Subset {
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_parser = existing)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = Subset::Test)]
    subset: Subset,
    /// Report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Per-stimulus predictions JSONL.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    n_boot: usize,
    #[arg(long, default_value_t = 0.95, value_parser = probability)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct CorpusStatsArgs {
    #[arg(long, value_parser = existing)]
    manifest: PathBuf,
    /// Restrict to stimuli that received at least one rating.
    #[arg(long, value_parser = existing)]
    ratings: Option<PathBuf>,
    /// Report JSON.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let report = cli.report.as_deref();
    let result = match cli.command {
        Command::Augment(a) => commands::augment(a, exec, report),
        Command::Split(a) => commands::split(a, report),
        Command::Serve(a) => commands::serve(a, report),
        Command::FilterRatings(a) => commands::filter(a, report),
        Command::Stats(a) => stats_report::run(a, report),
        Command::Train(a) => commands::train(a, exec, report),
        Command::Evaluate(a) => commands::evaluate(a, exec, report),
        Command::CorpusStats(a) => commands::corpus_stats(a, report),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
