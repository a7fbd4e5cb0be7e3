//! Aggregate views over enriched, classified tweets: sentiment indices by
//! region and perception scope, per-day volume and mention series, window
//! splits and the hashtag variance ranking.
//!
//! Every operation is a pure function of its inputs; grouped results come
//! back as ordered maps so the CSV writers in [`report`] are deterministic.

pub mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::Serialize;

use crate::geo::{CountryCode, EnrichedTweet, ResolvedLocation};
use crate::ingest::TweetRecord;
use crate::ptr::{ClassLabel, TweetPolarity, UserTable};

pub use report::{write_rho_csv, write_sentiment_series_csv, write_variance_csv, write_volume_csv};

/// Default minimum of polarized users for a city to be reported.
pub const DEFAULT_MIN_USERS_CITY: usize = 100;
/// Default minimum of polarized users for a country to be reported.
pub const DEFAULT_MIN_USERS_COUNTRY: usize = 10;

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("undefined ratio: no negatively polarized users")]
    UndefinedRatio,
    #[error("pivot {pivot} is outside the observation window [{start}, {end}]")]
    PivotOutsideWindow {
        pivot: DateTime<Utc>,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
    },
    #[error("no tweets, so no observation window")]
    EmptyWindow,
    #[error("frequency matrix has no nonzero count")]
    AllZeroMatrix,
    #[error("top-k must be at least 1")]
    InvalidTopK,
    #[error("matrix shape mismatch: {0}")]
    Shape(String),
}

/// Ratio of positively to negatively polarized users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SentimentIndex {
    n_pos: usize,
    n_neg: usize,
    rho: f64,
}

impl SentimentIndex {
    pub fn new(n_pos: usize, n_neg: usize) -> Result<Self, AnalyticsError> {
        if n_neg == 0 {
            return Err(AnalyticsError::UndefinedRatio);
        }
        Ok(SentimentIndex {
            n_pos,
            n_neg,
            rho: n_pos as f64 / n_neg as f64,
        })
    }

    pub fn n_pos(&self) -> usize {
        self.n_pos
    }

    pub fn n_neg(&self) -> usize {
        self.n_neg
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// Per-region counts; `index` is absent when the region has no negative
/// users.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionCounts {
    pub n_pos: usize,
    pub n_neg: usize,
    pub index: Option<SentimentIndex>,
}

impl RegionCounts {
    fn from_counts(counts: [usize; 2]) -> Self {
        RegionCounts {
            n_pos: counts[0],
            n_neg: counts[1],
            index: SentimentIndex::new(counts[0], counts[1]).ok(),
        }
    }

    pub fn total(&self) -> usize {
        self.n_pos + self.n_neg
    }
}

pub type RegionTable = BTreeMap<String, RegionCounts>;

pub fn rho(users: &UserTable) -> Result<SentimentIndex, AnalyticsError> {
    let mut counts = [0; 2];
    for c in users.values().filter_map(|u| u.assignment) {
        counts[c.index()] += 1;
    }
    SentimentIndex::new(counts[0], counts[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionLevel {
    Country,
    City,
}

/// One location per author: the resolved author location of their latest
/// located tweet (tweets are in time order).
pub fn user_locations(tweets: &[EnrichedTweet]) -> BTreeMap<&str, &ResolvedLocation> {
    let mut out = BTreeMap::new();
    for t in tweets {
        if let Some(loc) = &t.user_location {
            out.insert(t.base.author_id.as_str(), loc);
        }
    }
    out
}

fn region_key(loc: &ResolvedLocation, level: RegionLevel) -> Option<String> {
    match level {
        RegionLevel::Country => loc.country_code.map(|c| c.to_string()),
        RegionLevel::City => loc.city_id.clone(),
    }
}

/// Sentiment index per region over polarized, located users. Regions with
/// fewer than `min_users` polarized users are left out.
pub fn rho_by_region(
    users: &UserTable,
    tweets: &[EnrichedTweet],
    level: RegionLevel,
    min_users: usize,
) -> RegionTable {
    let mut counts: BTreeMap<String, [usize; 2]> = BTreeMap::new();
    for (author, loc) in user_locations(tweets) {
        let Some(class) = users.get(author).and_then(|u| u.assignment) else {
            continue;
        };
        if let Some(key) = region_key(loc, level) {
            counts.entry(key).or_default()[class.index()] += 1;
        }
    }
    counts
        .into_iter()
        .filter(|(_, c)| c[0] + c[1] >= min_users)
        .map(|(k, c)| (k, RegionCounts::from_counts(c)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PerceptionScope {
    Internal,
    External,
}

/// Internal iff any place mentioned in the text lies in `user_country`.
pub fn classify_perception(tweet: &EnrichedTweet, user_country: CountryCode) -> PerceptionScope {
    if tweet
        .mentioned_locations
        .iter()
        .any(|l| l.country_code == Some(user_country))
    {
        PerceptionScope::Internal
    } else {
        PerceptionScope::External
    }
}

/// Sentiment index per author country, counting a polarized, located user
/// only if they wrote at least one tweet of the given scope.
pub fn rho_by_perception(users: &UserTable, tweets: &[EnrichedTweet], scope: PerceptionScope) -> RegionTable {
    let located = user_locations(tweets);
    let mut qualifying: BTreeMap<&str, CountryCode> = BTreeMap::new();
    for t in tweets {
        let author = t.base.author_id.as_str();
        let Some(country) = located.get(author).and_then(|l| l.country_code) else {
            continue;
        };
        if classify_perception(t, country) == scope {
            qualifying.insert(author, country);
        }
    }
    let mut counts: BTreeMap<String, [usize; 2]> = BTreeMap::new();
    for (author, country) in qualifying {
        if let Some(class) = users.get(author).and_then(|u| u.assignment) {
            counts.entry(country.to_string()).or_default()[class.index()] += 1;
        }
    }
    counts.into_iter().map(|(k, c)| (k, RegionCounts::from_counts(c))).collect()
}

/// UTC calendar day of a timestamp.
pub fn day_bucket(ts: &DateTime<Utc>) -> NaiveDate {
    ts.date_naive()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    UserCountry,
    MentionCountry,
    All,
}

/// Key used for [`GroupBy::All`].
pub const ALL_KEY: &str = "all";

pub type VolumeSeries = BTreeMap<(String, NaiveDate), usize>;

/// Tweets per key per day. A tweet mentioning several countries counts once
/// for each. An empty or absent filter keeps every key.
pub fn volume_series(
    tweets: &[EnrichedTweet],
    groupby: GroupBy,
    filter: Option<&BTreeSet<CountryCode>>,
) -> VolumeSeries {
    let keep = |c: &CountryCode| filter.is_none_or(|f| f.is_empty() || f.contains(c));
    let mut out = VolumeSeries::new();
    for t in tweets {
        let day = day_bucket(&t.base.created_at);
        let keys: Vec<String> = match groupby {
            GroupBy::All => vec![ALL_KEY.to_string()],
            GroupBy::UserCountry => t.user_country().filter(keep).map(|c| c.to_string()).into_iter().collect(),
            GroupBy::MentionCountry => t
                .mentioned_countries()
                .into_iter()
                .filter(keep)
                .map(|c| c.to_string())
                .collect(),
        };
        for key in keys {
            *out.entry((key, day)).or_default() += 1;
        }
    }
    out
}

/// Per-day counts of polarized tweets mentioning `country`, as
/// `[n_pos, n_neg]`. Days with only unpolarized mentions appear as zeros.
pub fn sentiment_mention_series(
    tweets: &[EnrichedTweet],
    tweet_polarity: &[TweetPolarity],
    country: CountryCode,
) -> BTreeMap<NaiveDate, [usize; 2]> {
    let classes: HashMap<&str, Option<ClassLabel>> = tweet_polarity
        .iter()
        .map(|p| (p.tweet_id.as_str(), p.assignment))
        .collect();
    let mut out: BTreeMap<NaiveDate, [usize; 2]> = BTreeMap::new();
    for t in tweets {
        if !t.mentioned_locations.iter().any(|l| l.country_code == Some(country)) {
            continue;
        }
        let entry = out.entry(day_bucket(&t.base.created_at)).or_default();
        if let Some(Some(c)) = classes.get(t.base.tweet_id.as_str()) {
            entry[c.index()] += 1;
        }
    }
    out
}

pub trait Timestamped {
    fn created_at(&self) -> DateTime<Utc>;
}

impl Timestamped for TweetRecord {
    fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }
}

impl Timestamped for EnrichedTweet {
    fn created_at(&self) -> DateTime<Utc> {
        self.base.created_at
    }
}

/// The observation window: from the start of the first tweet's UTC day to
/// the end (exclusive start of the next day) of the last tweet's day.
pub fn observation_window<T: Timestamped>(tweets: &[T]) -> Result<(DateTime<Utc>, DateTime<Utc>), AnalyticsError> {
    let first = tweets.iter().map(Timestamped::created_at).min().ok_or(AnalyticsError::EmptyWindow)?;
    let last = tweets.iter().map(Timestamped::created_at).max().ok_or(AnalyticsError::EmptyWindow)?;
    let start = day_bucket(&first).and_hms_opt(0, 0, 0).unwrap().and_utc();
    let end = (day_bucket(&last) + Duration::days(1)).and_hms_opt(0, 0, 0).unwrap().and_utc();
    Ok((start, end))
}

/// Partitions tweets into those strictly before `pivot` and the rest,
/// keeping order.
pub fn split_window<T: Timestamped + Clone>(
    tweets: &[T],
    pivot: DateTime<Utc>,
) -> Result<(Vec<T>, Vec<T>), AnalyticsError> {
    let (start, end) = observation_window(tweets)?;
    if pivot < start || pivot > end {
        return Err(AnalyticsError::PivotOutsideWindow { pivot, start, end });
    }
    Ok(tweets.iter().cloned().partition(|t| t.created_at() < pivot))
}

/// Hashtag-by-day count matrix over a contiguous run of days.
#[derive(Debug, Clone, PartialEq)]
pub struct DayFrequencyMatrix {
    hashtags: Vec<String>,
    days: Vec<NaiveDate>,
    counts: Vec<Vec<u64>>,
}

impl DayFrequencyMatrix {
    /// `counts[i][j]` is the count of `hashtags[i]` on `days[j]`.
    pub fn new(hashtags: Vec<String>, days: Vec<NaiveDate>, counts: Vec<Vec<u64>>) -> Result<Self, AnalyticsError> {
        if counts.len() != hashtags.len() {
            return Err(AnalyticsError::Shape(format!(
                "{} rows for {} hashtags",
                counts.len(),
                hashtags.len()
            )));
        }
        if let Some(row) = counts.iter().position(|r| r.len() != days.len()) {
            return Err(AnalyticsError::Shape(format!(
                "row {row} has {} columns for {} days",
                counts[row].len(),
                days.len()
            )));
        }
        if days.windows(2).any(|w| w[1] != w[0] + Duration::days(1)) {
            return Err(AnalyticsError::Shape("days are not contiguous".into()));
        }
        Ok(DayFrequencyMatrix { hashtags, days, counts })
    }

    /// Counts, per day, the tweets carrying each hashtag. Days span the
    /// first to the last tweet; with `only` set, other hashtags are ignored.
    pub fn from_tweets<T: AsRef<TweetRecord>>(tweets: &[T], only: Option<&BTreeSet<String>>) -> Self {
        let days = match (
            tweets.iter().map(|t| t.as_ref().created_at).min(),
            tweets.iter().map(|t| t.as_ref().created_at).max(),
        ) {
            (Some(a), Some(b)) => day_bucket(&a).iter_days().take_while(|d| *d <= day_bucket(&b)).collect(),
            _ => Vec::new(),
        };
        let mut rows: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
        for t in tweets {
            let t = t.as_ref();
            let col = (day_bucket(&t.created_at) - days[0]).num_days() as usize;
            let distinct: BTreeSet<&String> = t.hashtags.iter().collect();
            for tag in distinct {
                if only.is_some_and(|o| !o.contains(tag)) {
                    continue;
                }
                rows.entry(tag).or_insert_with(|| vec![0; days.len()])[col] += 1;
            }
        }
        let (hashtags, counts) = rows.into_iter().map(|(h, r)| (h.to_string(), r)).unzip();
        DayFrequencyMatrix { hashtags, days, counts }
    }

    pub fn hashtags(&self) -> &[String] {
        &self.hashtags
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }
}

impl AsRef<TweetRecord> for TweetRecord {
    fn as_ref(&self) -> &TweetRecord {
        self
    }
}

impl AsRef<TweetRecord> for EnrichedTweet {
    fn as_ref(&self) -> &TweetRecord {
        &self.base
    }
}

/// Column normalization by day totals, then row normalization by hashtag
/// totals. All-zero columns and rows stay zero.
pub fn two_pass_normalize(m: &DayFrequencyMatrix) -> Result<Vec<Vec<f64>>, AnalyticsError> {
    let n_days = m.days.len();
    let mut day_totals = vec![0u64; n_days];
    for row in &m.counts {
        for (j, &c) in row.iter().enumerate() {
            day_totals[j] += c;
        }
    }
    if day_totals.iter().all(|&t| t == 0) {
        return Err(AnalyticsError::AllZeroMatrix);
    }
    Ok(m.counts
        .iter()
        .map(|row| {
            let by_day: Vec<f64> = row
                .iter()
                .zip(&day_totals)
                .map(|(&c, &t)| if t == 0 { 0.0 } else { c as f64 / t as f64 })
                .collect();
            let total: f64 = by_day.iter().sum();
            if total == 0.0 {
                by_day
            } else {
                by_day.into_iter().map(|x| x / total).collect()
            }
        })
        .collect())
}

/// Population variance (divides by the number of values).
pub fn population_variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// The `k` hashtags whose normalized daily frequencies vary the most,
/// highest first; equal variances are ordered by hashtag.
pub fn hashtag_variance_ranking(m: &DayFrequencyMatrix, k: usize) -> Result<Vec<(String, f64)>, AnalyticsError> {
    if k == 0 {
        return Err(AnalyticsError::InvalidTopK);
    }
    let rows = two_pass_normalize(m)?;
    let mut ranked: Vec<(String, f64)> = m
        .hashtags
        .iter()
        .zip(&rows)
        .map(|(h, r)| (h.clone(), population_variance(r)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}
