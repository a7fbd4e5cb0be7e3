//! Subcommand implementations. Each one validates its inputs, computes all
//! outputs in memory and only then writes them under `--out`.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{DateTime, NaiveDate, Utc};
use serde::Serialize;

use geopolar_core::analytics::{
    self, DayFrequencyMatrix, GroupBy, PerceptionScope, RegionLevel, DEFAULT_MIN_USERS_CITY,
    DEFAULT_MIN_USERS_COUNTRY,
};
use geopolar_core::geo::{enrich_corpus, read_enriched, write_enriched, EnrichedTweet};
use geopolar_core::ingest::{filter_relevant, parse_stream, write_jsonl, TopicHashtags};
use geopolar_core::ptr::{
    coverage_stats, ptr_run, read_tweet_assignments, read_user_assignments, write_hashtag_map,
    write_tweet_assignments, write_user_assignments, Coverage, IterationSummary, TweetPolarity, UserPolarity,
    UserTable,
};
use geopolar_core::synth::{self, SynthConfig};
use geopolar_core::{CountryCode, Corpus, Gazetteer, HashtagClassMap, PtrConfig};

use crate::{AnalyzeCommand, EnrichArgs, Failure, Level, PolarizeArgs, Scope, SynthArgs, TimelineKey};

fn config_err(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

fn require_file(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(config_err(format!("{what} {} does not exist", path.display())))
    }
}

fn load_gazetteer(path: Option<&Path>) -> Result<Gazetteer, Failure> {
    match path {
        None => Ok(Gazetteer::mini()),
        Some(p) => {
            require_file(p, "gazetteer")?;
            Gazetteer::load(p).map_err(|e| config_err(format!("gazetteer {}: {e}", p.display())))
        }
    }
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

fn load_enriched(path: &Path) -> Result<Vec<EnrichedTweet>, Failure> {
    require_file(path, "enriched corpus")?;
    Ok(read_enriched(open(path)?).with_context(|| format!("reading {}", path.display()))?)
}

fn load_users(path: &Path) -> Result<UserTable, Failure> {
    require_file(path, "user assignments")?;
    let rows = read_user_assignments(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    Ok(rows
        .into_iter()
        .map(|(author_id, assignment)| {
            let user = UserPolarity {
                author_id: author_id.clone(),
                assignment,
                counts: [0, 0],
            };
            (author_id, user)
        })
        .collect())
}

fn parse_countries(codes: &[String]) -> Result<BTreeSet<CountryCode>, Failure> {
    codes
        .iter()
        .map(|c| {
            c.trim()
                .to_ascii_uppercase()
                .parse()
                .map_err(|_| config_err(format!("invalid country code {c:?}")))
        })
        .collect()
}

/// Files to write, relative to the output directory.
#[derive(Default)]
struct Outputs(Vec<(PathBuf, Vec<u8>)>);

impl Outputs {
    fn add(&mut self, name: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.0.push((name.into(), bytes));
    }

    fn commit(self, dir: &Path) -> Result<(), Failure> {
        for (name, bytes) in self.0 {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
            }
            fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        }
        Ok(())
    }
}

fn json_bytes<T: Serialize>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn enrich(args: EnrichArgs) -> Result<(), Failure> {
    require_file(&args.input, "input")?;
    let gz = load_gazetteer(args.gazetteer.as_deref())?;
    let topics = match &args.topics {
        Some(p) => {
            require_file(p, "topic file")?;
            let topics = TopicHashtags::load(p).with_context(|| format!("reading {}", p.display()))?;
            if topics.is_empty() {
                return Err(config_err(format!("topic file {} lists no hashtags", p.display())));
            }
            Some(topics)
        }
        None => None,
    };

    let parsed = parse_stream(open(&args.input)?).with_context(|| format!("reading {}", args.input.display()))?;
    if parsed.skipped.total() > 0 {
        eprintln!("{}", parsed.skipped);
    }
    let corpus = match &topics {
        Some(t) => filter_relevant(&parsed.corpus, t).context("filtering by topic")?,
        None => parsed.corpus,
    };
    let enriched = enrich_corpus(&corpus, &gz);

    let mut out = Outputs::default();
    let mut buf = Vec::new();
    write_enriched(&enriched.tweets, &mut buf).context("encoding enriched corpus")?;
    out.add("enriched.jsonl", buf);
    out.add("stats.json", json_bytes(&enriched.stats)?);
    out.commit(&args.out)
}

#[derive(Serialize)]
struct PtrReport<'a> {
    iterations: usize,
    converged: bool,
    config: &'a PtrConfig,
    history: &'a [IterationSummary],
    coverage: Coverage,
    polarized_users: [usize; 2],
    polarized_tweets: [usize; 2],
}

pub fn polarize(args: PolarizeArgs) -> Result<(), Failure> {
    require_file(&args.enriched, "enriched corpus")?;
    require_file(&args.seeds, "seed file")?;
    let gz = load_gazetteer(args.gazetteer.as_deref())?;
    let defaults = PtrConfig::default();
    let config = PtrConfig {
        beta: args.beta.unwrap_or(defaults.beta),
        dominance_factor: args.dominance_factor.unwrap_or(defaults.dominance_factor),
        max_iterations: args.max_iterations.unwrap_or(defaults.max_iterations),
        min_class_tweets: args.min_class_tweets.unwrap_or(defaults.min_class_tweets),
    };
    config.validate().map_err(|e| config_err(e.to_string()))?;
    let seed_text = fs::read_to_string(&args.seeds).with_context(|| format!("reading {}", args.seeds.display()))?;
    let seeds = HashtagClassMap::parse_seeds(&seed_text).map_err(|e| config_err(e.to_string()))?;

    let tweets = load_enriched(&args.enriched)?;
    let corpus = Corpus::from_records(tweets.into_iter().map(|t| t.base).collect());
    let state = ptr_run(&corpus, &seeds, &config, &gz).map_err(|e| config_err(e.to_string()))?;
    let coverage = coverage_stats(&state, &corpus).context("coverage")?;
    if !state.converged {
        eprintln!("warning: no convergence within {} iterations", config.max_iterations);
    }

    let mut out = Outputs::default();
    let mut buf = Vec::new();
    write_tweet_assignments(&state.tweet_polarity, &mut buf).context("encoding tweet assignments")?;
    out.add("tweet_assignments.jsonl", buf);
    let mut buf = Vec::new();
    write_user_assignments(&state.user_polarity, &mut buf).context("encoding user assignments")?;
    out.add("user_assignments.jsonl", buf);
    let mut buf = Vec::new();
    write_hashtag_map(&state, &mut buf).context("encoding hashtag map")?;
    out.add("hashtag_map.tsv", buf);
    let report = PtrReport {
        iterations: state.iteration,
        converged: state.converged,
        config: &config,
        history: &state.history,
        coverage,
        polarized_users: state.polarized_users(),
        polarized_tweets: state.polarized_tweets(),
    };
    out.add("ptr_report.json", json_bytes(&report)?);
    out.commit(&args.out)
}

fn parse_pivot(s: &str) -> Result<DateTime<Utc>, Failure> {
    if let Ok(day) = s.parse::<NaiveDate>() {
        return Ok(day.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc());
    }
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| config_err(format!("invalid pivot {s:?}: expected YYYY-MM-DD or RFC 3339")))
}

fn csv_bytes<E>(f: impl FnOnce(&mut Vec<u8>) -> Result<(), E>) -> anyhow::Result<Vec<u8>>
where
    E: std::error::Error + Send + Sync + 'static,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn analyze(cmd: AnalyzeCommand) -> Result<(), Failure> {
    let mut out = Outputs::default();
    let dir = match cmd {
        AnalyzeCommand::Rho { io, users, by, min_users } => {
            let users = load_users(&users.users)?;
            let tweets = load_enriched(&io.enriched)?;
            let (level, default_min) = match by {
                Level::Country => (RegionLevel::Country, DEFAULT_MIN_USERS_COUNTRY),
                Level::City => (RegionLevel::City, DEFAULT_MIN_USERS_CITY),
            };
            let table = analytics::rho_by_region(&users, &tweets, level, min_users.unwrap_or(default_min));
            out.add("rho.csv", csv_bytes(|w| analytics::write_rho_csv(&table, w))?);
            io.out
        }
        AnalyzeCommand::Perception { io, users, scope } => {
            let users = load_users(&users.users)?;
            let tweets = load_enriched(&io.enriched)?;
            let (scope, name) = match scope {
                Scope::Internal => (PerceptionScope::Internal, "perception_internal.csv"),
                Scope::External => (PerceptionScope::External, "perception_external.csv"),
            };
            let table = analytics::rho_by_perception(&users, &tweets, scope);
            out.add(name, csv_bytes(|w| analytics::write_rho_csv(&table, w))?);
            io.out
        }
        AnalyzeCommand::Timeline { io, by, countries } => {
            let filter = parse_countries(&countries)?;
            let tweets = load_enriched(&io.enriched)?;
            let groupby = match by {
                TimelineKey::All => GroupBy::All,
                TimelineKey::UserCountry => GroupBy::UserCountry,
            };
            let series = analytics::volume_series(&tweets, groupby, Some(&filter));
            out.add("timeline.csv", csv_bytes(|w| analytics::write_volume_csv(&series, w))?);
            io.out
        }
        AnalyzeCommand::Mentions { io, countries } => {
            let filter = parse_countries(&countries)?;
            let tweets = load_enriched(&io.enriched)?;
            let series = analytics::volume_series(&tweets, GroupBy::MentionCountry, Some(&filter));
            out.add("mentions.csv", csv_bytes(|w| analytics::write_volume_csv(&series, w))?);
            io.out
        }
        AnalyzeCommand::SentimentMentions { io, tweets: assignments, country } => {
            let code = parse_countries(std::slice::from_ref(&country))?
                .into_iter()
                .next()
                .expect("one code parsed");
            require_file(&assignments, "tweet assignments")?;
            let tweets = load_enriched(&io.enriched)?;
            let rows = read_tweet_assignments(open(&assignments)?)
                .with_context(|| format!("reading {}", assignments.display()))?;
            let polarity: Vec<TweetPolarity> = rows
                .into_iter()
                .map(|(tweet_id, assignment)| TweetPolarity { tweet_id, assignment })
                .collect();
            let series = analytics::sentiment_mention_series(&tweets, &polarity, code);
            out.add(
                "sentiment_mentions.csv",
                csv_bytes(|w| analytics::write_sentiment_series_csv(code.as_str(), &series, w))?,
            );
            io.out
        }
        AnalyzeCommand::Variance { io, top, hashtags } => {
            if top == 0 {
                return Err(config_err("--top must be at least 1"));
            }
            let only = match &hashtags {
                Some(p) => {
                    require_file(p, "hashtag list")?;
                    let topics = TopicHashtags::load(p).with_context(|| format!("reading {}", p.display()))?;
                    Some(topics.iter().map(String::from).collect::<BTreeSet<String>>())
                }
                None => None,
            };
            let tweets = load_enriched(&io.enriched)?;
            let matrix = DayFrequencyMatrix::from_tweets(&tweets, only.as_ref());
            let ranking = analytics::hashtag_variance_ranking(&matrix, top).context("variance ranking")?;
            out.add("variance.csv", csv_bytes(|w| analytics::write_variance_csv(&ranking, w))?);
            io.out
        }
        AnalyzeCommand::Split { io, pivot } => {
            let pivot = parse_pivot(&pivot)?;
            let tweets = load_enriched(&io.enriched)?;
            let (before, after) = analytics::split_window(&tweets, pivot).map_err(|e| config_err(e.to_string()))?;
            for (name, part) in [("before", &before), ("after", &after)] {
                let mut buf = Vec::new();
                write_enriched(part, &mut buf).context("encoding split")?;
                out.add(Path::new(name).join("enriched.jsonl"), buf);
            }
            io.out
        }
    };
    out.commit(&dir)
}

pub fn synth(args: SynthArgs) -> Result<(), Failure> {
    let planted = (1.0 - args.neutral) / 2.0;
    let config = SynthConfig {
        n_users: args.users,
        n_days: args.days,
        tweets_per_user_mean: args.tweets_per_user,
        class_mix: [planted, planted, args.neutral],
        noise_rate: args.noise,
        seed_tags_per_class: [args.pos_seeds, args.neg_seeds],
        rng_seed: args.rng_seed,
        ..SynthConfig::default()
    };
    config.validate().map_err(|e| config_err(e.to_string()))?;
    let gz = load_gazetteer(args.gazetteer.as_deref())?;
    let generated = synth::generate(&config, &gz).map_err(|e| config_err(e.to_string()))?;

    let mut out = Outputs::default();
    let mut buf = Vec::new();
    write_jsonl(generated.corpus.tweets(), true, &mut buf).context("encoding corpus")?;
    out.add("corpus.jsonl", buf);
    let mut buf = Vec::new();
    synth::write_truth(&generated.truth, &mut buf).context("encoding truth")?;
    out.add("truth.jsonl", buf);
    let mut buf = Vec::new();
    synth::write_seeds(&generated.seeds, &mut buf).context("encoding seeds")?;
    out.add("seeds.txt", buf);
    let topics: String = generated.truth.hashtags.keys().map(|t| format!("{t}\n")).collect();
    out.add("topics.txt", topics.into_bytes());
    out.commit(&args.out)
}
