//! Iterative polarization tracking over hashtags, tweets and users.
//!
//! Each iteration classifies tweets from the current per-class hashtag
//! sets, classifies users from their polarized tweets, then rebuilds the
//! hashtag sets from everything the polarized users wrote. The loop stops
//! when the hashtag sets no longer change.

mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{
    read_tweet_assignments, read_user_assignments, write_hashtag_map, write_tweet_assignments,
    write_user_assignments, AssignmentIoError,
};

use crate::geo::Gazetteer;
use crate::ingest::{is_comment_line, normalize_hashtag, Corpus};

#[derive(thiserror::Error, Debug, PartialEq)]
pub enum PtrError {
    #[error("hashtag #{0} is seeded in both classes")]
    OverlappingSeeds(String),
    #[error("no seed hashtags for class {0}")]
    EmptySeedClass(ClassLabel),
    #[error("seed hashtags of class {0} match no tweet in the corpus")]
    UnusedSeeds(ClassLabel),
    #[error("seed hashtag #{0} names a location")]
    LocationSeed(String),
    #[error("seed file line {line}: expected `<pos|neg> <hashtag>`, found {content:?}")]
    SeedSyntax { line: usize, content: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("corpus is empty")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    #[serde(rename = "pos")]
    Positive,
    #[serde(rename = "neg")]
    Negative,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 2] = [ClassLabel::Positive, ClassLabel::Negative];

    pub fn index(self) -> usize {
        match self {
            ClassLabel::Positive => 0,
            ClassLabel::Negative => 1,
        }
    }

    pub fn other(self) -> ClassLabel {
        match self {
            ClassLabel::Positive => ClassLabel::Negative,
            ClassLabel::Negative => ClassLabel::Positive,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Positive => "pos",
            ClassLabel::Negative => "neg",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pos" | "+" | "c+" => Ok(ClassLabel::Positive),
            "neg" | "-" | "c-" => Ok(ClassLabel::Negative),
            _ => Err(()),
        }
    }
}

/// `pos`, `neg` or `none`.
pub fn assignment_str(assignment: Option<ClassLabel>) -> &'static str {
    assignment.map_or("none", ClassLabel::as_str)
}

/// Disjoint per-class hashtag sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HashtagClassMap {
    sets: [BTreeSet<String>; 2],
}

impl HashtagClassMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_sets<P, N, S>(pos: P, neg: N) -> Result<Self, PtrError>
    where
        P: IntoIterator<Item = S>,
        N: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut map = Self::new();
        for tag in pos {
            map.insert(tag.as_ref(), ClassLabel::Positive)?;
        }
        for tag in neg {
            map.insert(tag.as_ref(), ClassLabel::Negative)?;
        }
        Ok(map)
    }

    /// Adds a tag to a class; fails if the other class already holds it.
    pub fn insert(&mut self, tag: &str, class: ClassLabel) -> Result<(), PtrError> {
        let tag = normalize_hashtag(tag).ok_or_else(|| PtrError::InvalidConfig(format!("bad hashtag {tag:?}")))?;
        if self.sets[class.other().index()].contains(&tag) {
            return Err(PtrError::OverlappingSeeds(tag));
        }
        self.sets[class.index()].insert(tag);
        Ok(())
    }

    /// Parses a seed file: lines of `<pos|neg> <hashtag>`, `#` comments.
    pub fn parse_seeds(text: &str) -> Result<Self, PtrError> {
        let mut map = Self::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || is_comment_line(line) {
                continue;
            }
            let syntax = || PtrError::SeedSyntax {
                line: n + 1,
                content: raw.to_string(),
            };
            let mut parts = line.split_whitespace();
            let (Some(class), Some(tag), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(syntax());
            };
            let class: ClassLabel = class.parse().map_err(|_| syntax())?;
            if normalize_hashtag(tag).is_none() {
                return Err(syntax());
            }
            map.insert(tag, class)?;
        }
        Ok(map)
    }

    pub fn get(&self, class: ClassLabel) -> &BTreeSet<String> {
        &self.sets[class.index()]
    }

    pub fn class_of(&self, tag: &str) -> Option<ClassLabel> {
        ClassLabel::ALL.into_iter().find(|c| self.sets[c.index()].contains(tag))
    }

    /// All `(hashtag, class)` pairs in hashtag order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, ClassLabel)> {
        let mut all: Vec<(&str, ClassLabel)> = ClassLabel::ALL
            .into_iter()
            .flat_map(|c| self.sets[c.index()].iter().map(move |t| (t.as_str(), c)))
            .collect();
        all.sort_unstable();
        all.into_iter()
    }

    pub fn sizes(&self) -> [usize; 2] {
        [self.sets[0].len(), self.sets[1].len()]
    }

    pub fn len(&self) -> usize {
        self.sets[0].len() + self.sets[1].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_disjoint(&self) -> bool {
        self.sets[0].is_disjoint(&self.sets[1])
    }

    fn lookup(&self) -> HashMap<&str, ClassLabel> {
        self.iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtrConfig {
    pub beta: f64,
    pub dominance_factor: f64,
    pub max_iterations: usize,
    pub min_class_tweets: usize,
}

impl Default for PtrConfig {
    fn default() -> Self {
        PtrConfig {
            beta: 0.005,
            dominance_factor: 2.0,
            max_iterations: 10,
            min_class_tweets: 1,
        }
    }
}

impl PtrConfig {
    pub fn validate(&self) -> Result<(), PtrError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(PtrError::InvalidConfig(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.dominance_factor >= 1.0 && self.dominance_factor.is_finite()) {
            return Err(PtrError::InvalidConfig(format!(
                "dominance factor must be at least 1, got {}",
                self.dominance_factor
            )));
        }
        if self.max_iterations == 0 {
            return Err(PtrError::InvalidConfig("max iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TweetPolarity {
    pub tweet_id: String,
    pub assignment: Option<ClassLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserPolarity {
    pub author_id: String,
    pub assignment: Option<ClassLabel>,
    /// Polarized tweet counts, indexed by [`ClassLabel::index`].
    pub counts: [usize; 2],
}

/// User classification keyed by author id.
pub type UserTable = BTreeMap<String, UserPolarity>;

/// Classifies one tweet: polarized to `c` iff it carries a hashtag of `c`
/// and none of the other class.
pub fn classify_tweet<'a, I>(hashtags: I, lookup: &HashMap<&str, ClassLabel>) -> Option<ClassLabel>
where
    I: IntoIterator<Item = &'a String>,
{
    let mut seen = [false; 2];
    for tag in hashtags {
        if let Some(c) = lookup.get(tag.as_str()) {
            seen[c.index()] = true;
        }
    }
    match seen {
        [true, false] => Some(ClassLabel::Positive),
        [false, true] => Some(ClassLabel::Negative),
        _ => None,
    }
}

/// Tweet classification, aligned with `corpus.tweets()`.
pub fn tw_class(corpus: &Corpus, map: &HashtagClassMap) -> Vec<TweetPolarity> {
    let lookup = map.lookup();
    corpus
        .tweets()
        .par_iter()
        .map(|t| TweetPolarity {
            tweet_id: t.tweet_id.clone(),
            assignment: classify_tweet(&t.hashtags, &lookup),
        })
        .collect()
}

/// Classifies a user from per-class polarized tweet counts.
pub fn classify_user(counts: [usize; 2], config: &PtrConfig) -> Option<ClassLabel> {
    let qualifies = |c: ClassLabel| {
        let own = counts[c.index()];
        let other = counts[c.other().index()];
        own >= config.min_class_tweets && own as f64 >= config.dominance_factor * other as f64
    };
    match (qualifies(ClassLabel::Positive), qualifies(ClassLabel::Negative)) {
        (true, false) => Some(ClassLabel::Positive),
        (false, true) => Some(ClassLabel::Negative),
        _ => None,
    }
}

/// User classification over every author in the corpus.
///
/// # Panics
///
/// If `tweet_polarity` is not aligned with `corpus.tweets()`.
pub fn us_class(tweet_polarity: &[TweetPolarity], corpus: &Corpus, config: &PtrConfig) -> UserTable {
    assert_eq!(tweet_polarity.len(), corpus.len(), "tweet table must cover the corpus");
    let mut counts: BTreeMap<&str, [usize; 2]> = BTreeMap::new();
    for (tweet, polarity) in corpus.tweets().iter().zip(tweet_polarity) {
        debug_assert_eq!(tweet.tweet_id, polarity.tweet_id);
        let slot = counts.entry(tweet.author_id.as_str()).or_default();
        if let Some(c) = polarity.assignment {
            slot[c.index()] += 1;
        }
    }
    counts
        .into_iter()
        .map(|(author, counts)| {
            let user = UserPolarity {
                author_id: author.to_string(),
                assignment: classify_user(counts, config),
                counts,
            };
            (author.to_string(), user)
        })
        .collect()
}

/// Per-class tweet pools: every tweet written by a user of that class.
#[derive(Debug, Clone, Default)]
pub struct EvaluationPools {
    sizes: [usize; 2],
    doc_freq: [HashMap<String, usize>; 2],
}

type PoolCounts = ([usize; 2], [HashMap<String, usize>; 2]);

impl EvaluationPools {
    pub fn build(users: &UserTable, corpus: &Corpus) -> Self {
        let (sizes, doc_freq) = corpus
            .tweets()
            .par_iter()
            .fold(PoolCounts::default, |(mut sizes, mut df), tweet| {
                let class = users.get(&tweet.author_id).and_then(|u| u.assignment);
                if let Some(c) = class {
                    sizes[c.index()] += 1;
                    let distinct: HashSet<&String> = tweet.hashtags.iter().collect();
                    for tag in distinct {
                        *df[c.index()].entry(tag.clone()).or_default() += 1;
                    }
                }
                (sizes, df)
            })
            .reduce(PoolCounts::default, |(mut sa, mut da), (sb, db)| {
                for i in 0..2 {
                    sa[i] += sb[i];
                    for (tag, n) in &db[i] {
                        *da[i].entry(tag.clone()).or_default() += n;
                    }
                }
                (sa, da)
            });
        EvaluationPools { sizes, doc_freq }
    }

    pub fn pool_size(&self, class: ClassLabel) -> usize {
        self.sizes[class.index()]
    }

    /// Fraction of the class pool containing `tag`; 0 for an empty pool.
    pub fn frequency(&self, tag: &str, class: ClassLabel) -> f64 {
        let size = self.sizes[class.index()];
        if size == 0 {
            return 0.0;
        }
        self.doc_freq[class.index()].get(tag).copied().unwrap_or(0) as f64 / size as f64
    }

    /// Probability of seeing `tag` in class `class` and not in the others.
    pub fn score(&self, tag: &str, class: ClassLabel) -> f64 {
        self.frequency(tag, class) * (1.0 - self.frequency(tag, class.other()))
    }

    pub fn scores(&self, tag: &str) -> [f64; 2] {
        ClassLabel::ALL.map(|c| self.score(tag, c))
    }

    /// Hashtags present in at least one pool, sorted.
    pub fn candidates(&self) -> BTreeSet<&str> {
        self.doc_freq.iter().flat_map(|df| df.keys().map(String::as_str)).collect()
    }
}

/// Conjunct score of one hashtag for one class.
pub fn score_conjunct(tag: &str, class: ClassLabel, users: &UserTable, corpus: &Corpus) -> f64 {
    EvaluationPools::build(users, corpus).score(tag, class)
}

/// Class decided by the score rule: `S_c > beta * S_other` and `c` the
/// strict argmax of the scores.
pub fn decide_hashtag(scores: [f64; 2], beta: f64) -> Option<ClassLabel> {
    ClassLabel::ALL.into_iter().find(|c| {
        let own = scores[c.index()];
        let other = scores[c.other().index()];
        own > beta * other && own > other
    })
}

/// Removes every hashtag that names a city, a country or a country code.
pub fn strip_location_hashtags(map: &HashtagClassMap, gz: &Gazetteer) -> HashtagClassMap {
    HashtagClassMap {
        sets: map.sets.clone().map(|set| set.into_iter().filter(|t| !gz.is_location_name(t)).collect()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HtClassOutcome {
    pub map: HashtagClassMap,
    /// Scores of every candidate hashtag, indexed by [`ClassLabel::index`].
    pub scores: BTreeMap<String, [f64; 2]>,
}

/// Rebuilds the hashtag sets from the pools of polarized users.
///
/// When a class has no polarized user the `previous` map is returned
/// unchanged. Seeds always stay in their seed class.
pub fn ht_class(
    users: &UserTable,
    corpus: &Corpus,
    config: &PtrConfig,
    gz: &Gazetteer,
    seeds: &HashtagClassMap,
    previous: &HashtagClassMap,
) -> HtClassOutcome {
    let pools = EvaluationPools::build(users, corpus);
    let scores: BTreeMap<String, [f64; 2]> = pools
        .candidates()
        .into_iter()
        .map(|tag| (tag.to_string(), pools.scores(tag)))
        .collect();

    let mut polarized = [false; 2];
    for user in users.values() {
        if let Some(c) = user.assignment {
            polarized[c.index()] = true;
        }
    }
    if polarized != [true, true] {
        return HtClassOutcome {
            map: previous.clone(),
            scores,
        };
    }

    let mut map = HashtagClassMap::new();
    for (tag, s) in &scores {
        if let Some(c) = decide_hashtag(*s, config.beta) {
            map.sets[c.index()].insert(tag.clone());
        }
    }
    let mut map = strip_location_hashtags(&map, gz);
    for (tag, class) in seeds.iter() {
        map.sets[class.other().index()].remove(tag);
        map.sets[class.index()].insert(tag.to_string());
    }
    HtClassOutcome { map, scores }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationSummary {
    pub iteration: usize,
    /// Sizes of the hashtag sets used in this iteration.
    pub map_sizes: [usize; 2],
    pub polarized_tweets: [usize; 2],
    pub polarized_users: [usize; 2],
}

/// Snapshot after an iteration of the classifier.
///
/// `tweet_polarity` and `user_polarity` are the classifications obtained
/// from `hashtag_map`. On convergence `hashtag_map` is also the map the
/// following hashtag step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct PtrState {
    pub iteration: usize,
    pub hashtag_map: HashtagClassMap,
    pub tweet_polarity: Vec<TweetPolarity>,
    pub user_polarity: UserTable,
    pub converged: bool,
    /// Scores from the hashtag step of this iteration.
    pub scores: BTreeMap<String, [f64; 2]>,
    /// Iteration at which each hashtag of `hashtag_map` entered it (0 for
    /// seeds).
    pub iteration_added: BTreeMap<String, usize>,
    pub history: Vec<IterationSummary>,
}

impl PtrState {
    pub fn polarized_users(&self) -> [usize; 2] {
        count_assigned(self.user_polarity.values().map(|u| u.assignment))
    }

    pub fn polarized_tweets(&self) -> [usize; 2] {
        count_assigned(self.tweet_polarity.iter().map(|t| t.assignment))
    }
}

fn count_assigned<I: Iterator<Item = Option<ClassLabel>>>(it: I) -> [usize; 2] {
    let mut counts = [0; 2];
    for c in it.flatten() {
        counts[c.index()] += 1;
    }
    counts
}

/// Checks the seeds against the configuration, the gazetteer and the corpus.
pub fn validate_seeds(seeds: &HashtagClassMap, corpus: &Corpus, gz: &Gazetteer) -> Result<(), PtrError> {
    for class in ClassLabel::ALL {
        if seeds.get(class).is_empty() {
            return Err(PtrError::EmptySeedClass(class));
        }
    }
    if let Some((tag, _)) = seeds.iter().find(|(t, _)| gz.is_location_name(t)) {
        return Err(PtrError::LocationSeed(tag.to_string()));
    }
    for class in ClassLabel::ALL {
        let set = seeds.get(class);
        let used = corpus.tweets().iter().any(|t| t.hashtags.iter().any(|h| set.contains(h)));
        if !used {
            return Err(PtrError::UnusedSeeds(class));
        }
    }
    Ok(())
}

pub fn ptr_run(
    corpus: &Corpus,
    seeds: &HashtagClassMap,
    config: &PtrConfig,
    gz: &Gazetteer,
) -> Result<PtrState, PtrError> {
    ptr_run_observed(corpus, seeds, config, gz, |_| {})
}

/// Like [`ptr_run`], calling `observe` with the state after every
/// iteration.
pub fn ptr_run_observed<F>(
    corpus: &Corpus,
    seeds: &HashtagClassMap,
    config: &PtrConfig,
    gz: &Gazetteer,
    mut observe: F,
) -> Result<PtrState, PtrError>
where
    F: FnMut(&PtrState),
{
    config.validate()?;
    validate_seeds(seeds, corpus, gz)?;

    let mut map = seeds.clone();
    let mut added: BTreeMap<String, usize> = seeds.iter().map(|(t, _)| (t.to_string(), 0)).collect();
    let mut history = Vec::new();
    let mut iteration = 0;
    loop {
        let tweet_polarity = tw_class(corpus, &map);
        let user_polarity = us_class(&tweet_polarity, corpus, config);
        let outcome = ht_class(&user_polarity, corpus, config, gz, seeds, &map);
        iteration += 1;

        let converged = outcome.map == map;
        let mut state = PtrState {
            iteration,
            hashtag_map: map,
            tweet_polarity,
            user_polarity,
            converged,
            scores: outcome.scores,
            iteration_added: added,
            history: Vec::new(),
        };
        history.push(IterationSummary {
            iteration,
            map_sizes: state.hashtag_map.sizes(),
            polarized_tweets: state.polarized_tweets(),
            polarized_users: state.polarized_users(),
        });
        state.history = history;
        observe(&state);
        if converged || iteration >= config.max_iterations {
            return Ok(state);
        }

        let previous = state.iteration_added;
        added = outcome
            .map
            .iter()
            .map(|(t, _)| (t.to_string(), previous.get(t).copied().unwrap_or(iteration)))
            .collect();
        map = outcome.map;
        history = state.history;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coverage {
    pub tweet_fraction: f64,
    pub user_fraction: f64,
}

/// Fractions of tweets and users with a class assignment.
pub fn coverage_stats(state: &PtrState, corpus: &Corpus) -> Result<Coverage, PtrError> {
    if corpus.is_empty() || state.user_polarity.is_empty() {
        return Err(PtrError::EmptyCorpus);
    }
    let tweets: usize = state.polarized_tweets().iter().sum();
    let users: usize = state.polarized_users().iter().sum();
    Ok(Coverage {
        tweet_fraction: tweets as f64 / corpus.len() as f64,
        user_fraction: users as f64 / state.user_polarity.len() as f64,
    })
}
