mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "smellscope", version, about = "Inline comment smell dataset tooling")]
struct Cli {
    /// TOML file with default values for flags (flags win).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract inline comments and their code scope from a source tree.
    Extract(ExtractArgs),
    /// Deduplicate a labelled dataset and drop minority classes.
    Prepare(PrepareArgs),
    /// Train on a stratified 80:20 split and evaluate on the held-out part.
    TrainEval(TrainEvalArgs),
    /// Stratified k-fold cross-validation.
    Cv(CvArgs),
    /// Classify records with a chat-completion model and score the answers.
    Llm(LlmArgs),
    /// Per-class F1 differences between two reports.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Root of the source tree.
    pub root: PathBuf,
    /// Records file to write (.csv or .jsonl).
    #[arg(long)]
    pub out: PathBuf,
    /// Review queue for comments whose scope is ambiguous [default: <out>.review.json].
    #[arg(long)]
    pub review: Option<PathBuf>,
    /// Only files matching one of these globs (relative to the root).
    #[arg(long)]
    pub include: Vec<String>,
    /// Skip files matching any of these globs.
    #[arg(long)]
    pub exclude: Vec<String>,
    /// Project name stored on every record [default: root directory name].
    #[arg(long)]
    pub project: Option<String>,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Drop classes with fewer records than this [default: 30].
    #[arg(long)]
    pub threshold: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Model kinds, comma separated, or `all` [default: all].
    #[arg(long)]
    pub models: Vec<String>,
    /// Master seed [default: 42].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train without SMOTE oversampling.
    #[arg(long)]
    pub no_smote: bool,
    /// SMOTE neighbours [default: 5].
    #[arg(long)]
    pub smote_k: Option<usize>,
    /// Add code segment tokens to the comment features.
    #[arg(long)]
    pub with_code: bool,
    /// Keep one-character tokens.
    #[arg(long)]
    pub keep_short_tokens: bool,
}

#[derive(Debug, Args)]
pub struct TrainEvalArgs {
    #[command(flatten)]
    pub common: ModelArgs,
    /// Held-out fraction [default: 0.2].
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub common: ModelArgs,
    /// Number of folds [default: 10].
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LlmArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Prompt template TOML [default: bundled taxonomy].
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Add the code section to every prompt.
    #[arg(long)]
    pub with_code: bool,
    /// Response cache directory [default: <out-dir>/cache].
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Use the offline keyword classifier instead of the HTTP endpoint.
    #[arg(long)]
    pub mock: bool,
    /// Model name [default: gpt-4].
    #[arg(long)]
    pub model: Option<String>,
    /// [default: 0.2]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// [default: 0.1]
    #[arg(long)]
    pub top_p: Option<f64>,
    /// [default: 10]
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// Chat-completion URL [default: OpenAI].
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Per-request timeout in seconds [default: 60].
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Attempts per request, including the first [default: 3].
    #[arg(long)]
    pub max_attempts: Option<u32>,
    /// Requests in flight [default: 4].
    #[arg(long)]
    pub concurrency: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Baseline report.json.
    pub a: PathBuf,
    /// Report compared against the baseline.
    pub b: PathBuf,
    /// Write the comparison as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = config::FileConfig::load(cli.config.as_deref()).and_then(|file| match cli.command {
        Command::Extract(a) => commands::extract(a),
        Command::Prepare(a) => commands::prepare(a, &file),
        Command::TrainEval(a) => commands::train_eval(a, &file),
        Command::Cv(a) => commands::cv(a, &file),
        Command::Llm(a) => commands::llm(a, &file),
        Command::Compare(a) => commands::compare(a),
    });
    match result {
        Ok(commands::Outcome::Done) => ExitCode::SUCCESS,
        Ok(commands::Outcome::NeedsReview(n)) => {
            eprintln!("{n} comment(s) need manual scope review");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
