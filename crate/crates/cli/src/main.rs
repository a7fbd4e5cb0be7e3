//! `geopolar`: enrich tweet streams, track polarization and emit analytic
//! tables.
//!
//! Exit codes: 0 on success, 1 on runtime or I/O failure, 2 on invalid
//! configuration. Configuration is checked before anything is written.

mod commands;
mod config_file;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "geopolar", version, about)]
struct Cli {
    /// Worker threads; does not affect any output.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// File of `key = value` lines supplying defaults for long flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse, filter and geo-enrich a JSON-lines stream.
    Enrich(EnrichArgs),
    /// Run the polarization classifier over an enriched corpus.
    Polarize(PolarizeArgs),
    /// Compute an analytic table.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic corpus with planted polarization.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct EnrichArgs {
    #[arg(long)]
    input: PathBuf,
    /// Gazetteer TSV; the bundled mini-gazetteer when absent.
    #[arg(long)]
    gazetteer: Option<PathBuf>,
    /// Topic hashtags, one per line; without it every record is kept.
    #[arg(long)]
    topics: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PolarizeArgs {
    #[arg(long)]
    enriched: PathBuf,
    #[arg(long)]
    seeds: PathBuf,
    #[arg(long)]
    gazetteer: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    dominance_factor: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    min_class_tweets: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(subcommand)]
    table: AnalyzeCommand,
}

#[derive(Args, Debug)]
struct AnalyzeInputs {
    #[arg(long)]
    enriched: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct UserInputs {
    /// User assignments written by `polarize`.
    #[arg(long)]
    users: PathBuf,
}

#[derive(Subcommand, Debug)]
enum AnalyzeCommand {
    /// Sentiment index per country or city (`rho.csv`).
    Rho {
        #[command(flatten)]
        io: AnalyzeInputs,
        #[command(flatten)]
        users: UserInputs,
        #[arg(long, value_enum, default_value_t = Level::Country)]
        by: Level,
        /// Defaults to 10 for countries and 100 for cities.
        #[arg(long)]
        min_users: Option<usize>,
    },
    /// Sentiment index per country for one perception scope
    /// (`perception_<scope>.csv`).
    Perception {
        #[command(flatten)]
        io: AnalyzeInputs,
        #[command(flatten)]
        users: UserInputs,
        #[arg(long, value_enum)]
        scope: Scope,
    },
    /// Tweets per day, overall or per author country (`timeline.csv`).
    Timeline {
        #[command(flatten)]
        io: AnalyzeInputs,
        #[arg(long, value_enum, default_value_t = TimelineKey::All)]
        by: TimelineKey,
        /// Comma-separated country codes to keep.
        #[arg(long, value_delimiter = ',')]
        countries: Vec<String>,
    },
    /// Tweets per day per mentioned country (`mentions.csv`).
    Mentions {
        #[command(flatten)]
        io: AnalyzeInputs,
        #[arg(long, value_delimiter = ',')]
        countries: Vec<String>,
    },
    /// Polarized tweets per day mentioning one country
    /// (`sentiment_mentions.csv`).
    SentimentMentions {
        #[command(flatten)]
        io: AnalyzeInputs,
        /// Tweet assignments written by `polarize`.
        #[arg(long)]
        tweets: PathBuf,
        #[arg(long)]
        country: String,
    },
    /// Hashtags ranked by variance of normalized daily frequency
    /// (`variance.csv`).
    Variance {
        #[command(flatten)]
        io: AnalyzeInputs,
        #[arg(long, default_value_t = 20)]
        top: usize,
        /// Only rank these hashtags (one per line).
        #[arg(long)]
        hashtags: Option<PathBuf>,
    },
    /// Split the corpus at a UTC instant (`before/enriched.jsonl`,
    /// `after/enriched.jsonl`).
    Split {
        #[command(flatten)]
        io: AnalyzeInputs,
        /// `YYYY-MM-DD` (midnight UTC) or an RFC 3339 timestamp.
        #[arg(long)]
        pivot: String,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Level {
    Country,
    City,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Scope {
    Internal,
    External,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TimelineKey {
    All,
    UserCountry,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    users: usize,
    #[arg(long, default_value_t = 30)]
    days: u32,
    #[arg(long, default_value_t = 10.0)]
    tweets_per_user: f64,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Fraction of neutral users; the rest is split evenly between classes.
    #[arg(long, default_value_t = 0.0)]
    neutral: f64,
    #[arg(long, default_value_t = 3)]
    pos_seeds: usize,
    #[arg(long, default_value_t = 3)]
    neg_seeds: usize,
    #[arg(long, default_value_t = 42)]
    rng_seed: u64,
    #[arg(long)]
    gazetteer: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(thiserror::Error, Debug)]
pub enum Failure {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.into()))?;
    }
    match cli.command {
        Command::Enrich(args) => commands::enrich(args),
        Command::Polarize(args) => commands::polarize(args),
        Command::Analyze(args) => commands::analyze(args.table),
        Command::Synth(args) => commands::synth(args),
    }
}

fn main() -> ExitCode {
    let argv = match config_file::merged_args(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::try_parse_from(argv).unwrap_or_else(|e| e.exit());
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Runtime(e) => eprintln!("error: {e:#}"),
                Failure::Config(msg) => eprintln!("error: {msg}"),
            }
            ExitCode::from(failure.exit_code())
        }
    }
}
