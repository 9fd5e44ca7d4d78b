mod artifacts;
mod backend;
mod commands;
mod config;
mod error;
mod refs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use crate::config::{BackendKind, RunConfig};
use crate::error::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

/// Personal long-term memory QA: generate or import a memory corpus, index
/// it, train the question classifier, answer questions and run evaluations.
#[derive(Debug, Parser)]
#[command(name = "memq", version)]
struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "text")]
    format: Format,
    #[command(flatten)]
    paths: PathArgs,
    #[command(subcommand)]
    command: Command,
}

/// Artifact locations.
#[derive(Debug, Args)]
struct PathArgs {
    /// Memory corpus (JSON lines).
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// QA items (JSON).
    #[arg(long, global = true)]
    qa: Option<PathBuf>,
    /// Labeled questions (TSV).
    #[arg(long, global = true)]
    labeled: Option<PathBuf>,
    /// Index directory.
    #[arg(long, global = true)]
    index_dir: Option<PathBuf>,
    /// Classifier model file.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Seed for generation and evaluation.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with QA items and labeled questions.
    Gen(commands::data::GenArgs),
    /// Validate and normalize a corpus, aligning QA references.
    Ingest(commands::data::IngestArgs),
    /// Build or query the per-character BM25 index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Train or evaluate the question-type classifier.
    #[command(subcommand)]
    Classifier(ClassifierCommand),
    /// Measure Recall@K of retrieval over the QA set.
    Retrieve(commands::index::RetrieveArgs),
    /// Answer one question from a character's memories.
    Answer(commands::answer::AnswerArgs),
    /// Run evaluation settings and write a run directory.
    Eval(commands::eval::EvalArgs),
    /// Memory-condition ablation (NR, IR, CR by default).
    Ablate(commands::eval::EvalArgs),
}

#[derive(Debug, Subcommand)]
enum IndexCommand {
    Build(commands::index::BuildArgs),
    Query(commands::index::QueryArgs),
}

#[derive(Debug, Subcommand)]
enum ClassifierCommand {
    Train(commands::classify::TrainArgs),
    Eval(commands::classify::EvalArgs),
}

/// Options for commands that call a generation backend.
#[derive(Debug, Args, Clone, Default)]
pub struct BackendArgs {
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Chat-completions endpoint base URL.
    #[arg(long)]
    base_url: Option<String>,
    /// Model name sent to the chat endpoint.
    #[arg(long)]
    llm: Option<String>,
    /// Transcript directory for the replay backend.
    #[arg(long)]
    transcripts: Option<PathBuf>,
    /// Backend name the transcripts were recorded with.
    #[arg(long)]
    replay_of: Option<String>,
}

impl BackendArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let b = &mut cfg.backend;
        if let Some(k) = self.backend {
            b.kind = k;
        }
        if let Some(v) = &self.base_url {
            b.base_url = v.clone();
        }
        if let Some(v) = &self.llm {
            b.model = v.clone();
        }
        if let Some(v) = &self.transcripts {
            b.transcripts = Some(v.clone());
        }
        if let Some(v) = &self.replay_of {
            b.replay_of = Some(v.clone());
        }
    }
}

fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    let p = &cli.paths;
    let paths = &mut cfg.paths;
    for (flag, slot) in [
        (&p.corpus, &mut paths.corpus),
        (&p.qa, &mut paths.qa),
        (&p.labeled, &mut paths.labeled),
        (&p.index_dir, &mut paths.index_dir),
        (&p.model, &mut paths.model),
    ] {
        if let Some(v) = flag {
            *slot = v.clone();
        }
    }
    if let Some(s) = p.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = resolve_config(&cli)?;
    let fmt = cli.format;
    match cli.command {
        Command::Gen(a) => commands::data::gen(&cfg, &a, fmt),
        Command::Ingest(a) => commands::data::ingest(&cfg, &a, fmt),
        Command::Index(IndexCommand::Build(a)) => commands::index::build(&cfg, &a, fmt),
        Command::Index(IndexCommand::Query(a)) => commands::index::query(&cfg, &a, fmt),
        Command::Classifier(ClassifierCommand::Train(a)) => commands::classify::train(&cfg, &a, fmt),
        Command::Classifier(ClassifierCommand::Eval(a)) => commands::classify::eval(&cfg, &a, fmt),
        Command::Retrieve(a) => commands::index::retrieve(&mut cfg, &a, fmt),
        Command::Answer(a) => commands::answer::answer(&mut cfg, &a, fmt),
        Command::Eval(a) => commands::eval::eval(&mut cfg, &a, fmt, commands::eval::Mode::Eval),
        Command::Ablate(a) => commands::eval::eval(&mut cfg, &a, fmt, commands::eval::Mode::Ablate),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("MEMQ_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("memq: {e}");
            e.exit_code()
        }
    }
}
