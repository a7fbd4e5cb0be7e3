//! JSON-lines ingestion, hashtag extraction and topic filtering.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::path::Path;

use chrono::{DateTime, Timelike, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(thiserror::Error, Debug)]
pub enum IngestError {
    #[error("topic hashtag set is empty")]
    EmptyTopicSet,
    #[error("I/O error")]
    Io(#[from] io::Error),
    #[error("JSON encoding error")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Returns `None` when the coordinates fall outside the valid ranges.
    pub fn new(lat: f64, lon: f64) -> Option<Self> {
        if (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) {
            Some(GeoPoint { lat, lon })
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TweetRecord {
    pub tweet_id: String,
    pub author_id: String,
    /// UTC, second precision.
    pub created_at: DateTime<Utc>,
    pub text: String,
    /// Lowercase, without the leading `#`.
    pub hashtags: Vec<String>,
    pub gps: Option<GeoPoint>,
    pub place_name: Option<String>,
    pub user_location_text: Option<String>,
}

impl TweetRecord {
    pub fn has_hashtag(&self, tag: &str) -> bool {
        self.hashtags.iter().any(|h| h == tag)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_total: usize,
    pub n_relevant: usize,
    pub n_with_user_location: usize,
    pub n_with_mentioned_location: usize,
    pub n_users: usize,
}

/// An immutable, ordered collection of tweets.
///
/// Tweets are kept sorted by `(created_at, tweet_id)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    tweets: Vec<TweetRecord>,
    stats: CorpusStats,
}

impl Corpus {
    /// Builds a corpus in which every record counts as relevant.
    pub fn from_records(mut tweets: Vec<TweetRecord>) -> Self {
        sort_tweets(&mut tweets);
        let stats = CorpusStats {
            n_total: tweets.len(),
            n_relevant: tweets.len(),
            n_users: count_users(&tweets),
            ..CorpusStats::default()
        };
        Corpus { tweets, stats }
    }

    pub fn tweets(&self) -> &[TweetRecord] {
        &self.tweets
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    pub fn into_tweets(self) -> Vec<TweetRecord> {
        self.tweets
    }
}

pub(crate) fn sort_tweets(tweets: &mut [TweetRecord]) {
    tweets.sort_by(|a, b| {
        a.created_at
            .cmp(&b.created_at)
            .then_with(|| a.tweet_id.cmp(&b.tweet_id))
    });
}

fn count_users(tweets: &[TweetRecord]) -> usize {
    tweets
        .iter()
        .map(|t| t.author_id.as_str())
        .collect::<HashSet<_>>()
        .len()
}

/// Counts of input lines that did not become records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SkipReport {
    pub malformed: usize,
    pub missing_id: usize,
    pub bad_timestamp: usize,
    pub duplicate_id: usize,
}

impl SkipReport {
    pub fn total(&self) -> usize {
        self.malformed + self.missing_id + self.bad_timestamp + self.duplicate_id
    }
}

impl fmt::Display for SkipReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "skipped {} line(s): {} malformed, {} missing id, {} bad timestamp, {} duplicate id",
            self.total(),
            self.malformed,
            self.missing_id,
            self.bad_timestamp,
            self.duplicate_id
        )
    }
}

#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub corpus: Corpus,
    pub skipped: SkipReport,
}

#[derive(Deserialize)]
struct RawRecord {
    tweet_id: Option<Value>,
    author_id: Option<Value>,
    created_at: Option<String>,
    text: Option<String>,
    hashtags: Option<Vec<String>>,
    lat: Option<f64>,
    lon: Option<f64>,
    place: Option<String>,
    user_location: Option<String>,
}

enum LineError {
    Malformed,
    MissingId,
    BadTimestamp,
}

fn id_string(v: Option<Value>) -> Option<String> {
    let s = match v? {
        Value::String(s) => s,
        Value::Number(n) => n.to_string(),
        _ => return None,
    };
    let s = s.trim().to_string();
    (!s.is_empty()).then_some(s)
}

fn non_empty(s: Option<String>) -> Option<String> {
    s.map(|s| s.trim().to_string()).filter(|s| !s.is_empty())
}

/// Parses an ISO-8601 / RFC 3339 timestamp, or the classic Twitter API
/// `created_at` format, truncated to whole seconds.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    let parsed = DateTime::parse_from_rfc3339(s)
        .or_else(|_| DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y"))
        .ok()?;
    parsed.with_timezone(&Utc).with_nanosecond(0)
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn parse_line(line: &[u8]) -> Result<TweetRecord, LineError> {
    let raw: RawRecord = serde_json::from_slice(line).map_err(|_| LineError::Malformed)?;
    let (Some(tweet_id), Some(author_id)) = (id_string(raw.tweet_id), id_string(raw.author_id))
    else {
        return Err(LineError::MissingId);
    };
    let created_at = raw
        .created_at
        .as_deref()
        .and_then(parse_timestamp)
        .ok_or(LineError::BadTimestamp)?;
    let text = raw.text.unwrap_or_default();
    let hashtags = match raw.hashtags {
        Some(tags) => tags.iter().filter_map(|t| normalize_hashtag(t)).collect(),
        None => extract_hashtags(&text),
    };
    let gps = match (raw.lat, raw.lon) {
        (Some(lat), Some(lon)) => GeoPoint::new(lat, lon),
        _ => None,
    };
    Ok(TweetRecord {
        tweet_id,
        author_id,
        created_at,
        text,
        hashtags,
        gps,
        place_name: non_empty(raw.place),
        user_location_text: non_empty(raw.user_location),
    })
}

/// Parses a JSON-lines stream into a [`Corpus`].
///
/// Lines that fail to parse are counted in the returned [`SkipReport`] and
/// never abort the stream. Blank lines are ignored. When a `tweet_id`
/// occurs more than once the last occurrence wins.
pub fn parse_stream<R: BufRead>(reader: R) -> io::Result<ParseOutcome> {
    let lines = reader
        .split(b'\n')
        .collect::<io::Result<Vec<Vec<u8>>>>()?;
    Ok(parse_lines(&lines))
}

fn parse_lines(lines: &[Vec<u8>]) -> ParseOutcome {
    let parsed: Vec<Option<Result<TweetRecord, LineError>>> = lines
        .par_iter()
        .map(|line| {
            let trimmed = line.trim_ascii();
            (!trimmed.is_empty()).then(|| parse_line(trimmed))
        })
        .collect();

    let mut skipped = SkipReport::default();
    let mut records = Vec::with_capacity(parsed.len());
    let mut position: HashMap<String, usize> = HashMap::new();
    for result in parsed.into_iter().flatten() {
        match result {
            Ok(record) => {
                if let Some(&slot) = position.get(&record.tweet_id) {
                    skipped.duplicate_id += 1;
                    records[slot] = record;
                } else {
                    position.insert(record.tweet_id.clone(), records.len());
                    records.push(record);
                }
            }
            Err(LineError::Malformed) => skipped.malformed += 1,
            Err(LineError::MissingId) => skipped.missing_id += 1,
            Err(LineError::BadTimestamp) => skipped.bad_timestamp += 1,
        }
    }
    ParseOutcome {
        corpus: Corpus::from_records(records),
        skipped,
    }
}

/// Extracts `#[A-Za-z0-9_]+` hashtags from free text, ASCII-lowercased, in
/// order of appearance with duplicates preserved.
pub fn extract_hashtags(text: &str) -> Vec<String> {
    let bytes = text.as_bytes();
    let mut tags = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'#' {
            i += 1;
            continue;
        }
        let start = i + 1;
        let mut end = start;
        while end < bytes.len() && is_tag_byte(bytes[end]) {
            end += 1;
        }
        if end > start {
            tags.push(text[start..end].to_ascii_lowercase());
        }
        i = end.max(start);
    }
    tags
}

fn is_tag_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Normalizes a hashtag given explicitly (e.g. from a `hashtags` array or a
/// topic file): strips leading `#`, lowercases, and rejects empty tags or
/// tags containing whitespace.
pub fn normalize_hashtag(tag: &str) -> Option<String> {
    let tag = tag.trim().trim_start_matches('#');
    if tag.is_empty() || tag.chars().any(char::is_whitespace) {
        return None;
    }
    Some(tag.to_lowercase())
}

/// The topic-hashtag list used to select relevant tweets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TopicHashtags(BTreeSet<String>);

impl TopicHashtags {
    pub fn new<I, S>(tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        TopicHashtags(
            tags.into_iter()
                .filter_map(|t| normalize_hashtag(t.as_ref()))
                .collect(),
        )
    }

    /// One hashtag per line, `#` optional. Lines starting with `#` followed
    /// by whitespace, or `#` alone, are comments.
    pub fn parse(text: &str) -> Self {
        let tags = text.lines().map(str::trim).filter(|line| {
            !line.is_empty() && !is_comment_line(line)
        });
        TopicHashtags::new(tags)
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.0.contains(tag)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

/// A `#` line is a comment unless it is a single hashtag token such as
/// `#refugeeswelcome`.
pub(crate) fn is_comment_line(line: &str) -> bool {
    match line.strip_prefix('#') {
        Some(rest) => rest.is_empty() || rest.starts_with(|c: char| c.is_whitespace() || c == '#'),
        None => false,
    }
}

/// Keeps the tweets carrying at least one topic hashtag.
pub fn filter_relevant(corpus: &Corpus, topics: &TopicHashtags) -> Result<Corpus, IngestError> {
    if topics.is_empty() {
        return Err(IngestError::EmptyTopicSet);
    }
    let tweets: Vec<TweetRecord> = corpus
        .tweets
        .iter()
        .filter(|t| t.hashtags.iter().any(|h| topics.contains(h)))
        .cloned()
        .collect();
    let stats = CorpusStats {
        n_total: corpus.stats.n_total,
        n_relevant: tweets.len(),
        n_users: count_users(&tweets),
        ..CorpusStats::default()
    };
    Ok(Corpus { tweets, stats })
}

/// Wire form of [`TweetRecord`] in the ingest JSON-lines format.
#[derive(Serialize)]
struct WireRecord<'a> {
    tweet_id: &'a str,
    author_id: &'a str,
    created_at: String,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    hashtags: Option<&'a [String]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    place: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    user_location: Option<&'a str>,
}

/// Writes records in the ingest JSON-lines format. With
/// `include_hashtags = false` the hashtags are left to be recovered from
/// the text.
pub fn write_jsonl<W: Write>(
    tweets: &[TweetRecord],
    include_hashtags: bool,
    mut out: W,
) -> Result<(), IngestError> {
    for t in tweets {
        let wire = WireRecord {
            tweet_id: &t.tweet_id,
            author_id: &t.author_id,
            created_at: format_timestamp(&t.created_at),
            text: &t.text,
            hashtags: include_hashtags.then_some(t.hashtags.as_slice()),
            lat: t.gps.map(|g| g.lat),
            lon: t.gps.map(|g| g.lon),
            place: t.place_name.as_deref(),
            user_location: t.user_location_text.as_deref(),
        };
        serde_json::to_writer(&mut out, &wire)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(input: &str) -> ParseOutcome {
        parse_stream(input.as_bytes()).unwrap()
    }

    fn line(id: &str, author: &str, ts: &str, text: &str) -> String {
        serde_json::json!({"tweet_id": id, "author_id": author, "created_at": ts, "text": text})
            .to_string()
    }

    #[test]
    fn parses_single_line_and_lowercases_tags() {
        let out = parse(
            r#"{"tweet_id":"1","author_id":"u1","created_at":"2015-09-04T10:00:00Z","text":"help #RefugeesWelcome"}"#,
        );
        assert_eq!(out.corpus.len(), 1);
        let t = &out.corpus.tweets()[0];
        assert_eq!(t.hashtags, vec!["refugeeswelcome"]);
        assert_eq!(t.author_id, "u1");
        assert_eq!(format_timestamp(&t.created_at), "2015-09-04T10:00:00Z");
    }

    #[test]
    fn empty_input_gives_empty_corpus() {
        let out = parse("");
        assert!(out.corpus.is_empty());
        assert_eq!(out.corpus.stats(), &CorpusStats::default());
        assert_eq!(out.skipped.total(), 0);
    }

    #[test]
    fn malformed_line_is_skipped() {
        let input = [
            line("1", "a", "2015-09-01T00:00:00Z", "x"),
            line("2", "a", "2015-09-02T00:00:00Z", "y"),
            "{not json".to_string(),
            line("3", "b", "2015-09-03T00:00:00Z", "z"),
        ]
        .join("\n");
        let out = parse(&input);
        assert_eq!(out.corpus.len(), 3);
        assert_eq!(out.skipped.malformed, 1);
        assert_eq!(out.skipped.total(), 1);
    }

    #[test]
    fn missing_ids_and_bad_timestamps_are_skipped() {
        let input = [
            r#"{"author_id":"a","created_at":"2015-09-01T00:00:00Z"}"#.to_string(),
            r#"{"tweet_id":"9","created_at":"2015-09-01T00:00:00Z"}"#.to_string(),
            r#"{"tweet_id":"8","author_id":"a","created_at":"yesterday"}"#.to_string(),
        ]
        .join("\n");
        let out = parse(&input);
        assert!(out.corpus.is_empty());
        assert_eq!(out.skipped.missing_id, 2);
        assert_eq!(out.skipped.bad_timestamp, 1);
    }

    #[test]
    fn duplicate_id_last_wins() {
        let input = [
            line("1", "a", "2015-09-01T00:00:00Z", "first"),
            line("1", "a", "2015-09-01T00:00:00Z", "second"),
        ]
        .join("\n");
        let out = parse(&input);
        assert_eq!(out.corpus.len(), 1);
        assert_eq!(out.corpus.tweets()[0].text, "second");
        assert_eq!(out.skipped.duplicate_id, 1);
    }

    #[test]
    fn hashtags_array_takes_precedence_over_text() {
        let out = parse(
            r##"{"tweet_id":1,"author_id":2,"created_at":"2015-09-01T00:00:00Z","text":"#a","hashtags":["#B"," ","c"],"lat":91,"lon":0}"##,
        );
        let t = &out.corpus.tweets()[0];
        assert_eq!(t.tweet_id, "1");
        assert_eq!(t.hashtags, vec!["b", "c"]);
        assert!(t.gps.is_none());
    }

    #[test]
    fn ordering_is_by_time_then_id() {
        let input = [
            line("b", "a", "2015-09-02T00:00:00Z", ""),
            line("c", "a", "2015-09-01T00:00:00Z", ""),
            line("a", "a", "2015-09-02T00:00:00Z", ""),
        ]
        .join("\n");
        let ids: Vec<_> = parse(&input)
            .corpus
            .tweets()
            .iter()
            .map(|t| t.tweet_id.clone())
            .collect();
        assert_eq!(ids, ["c", "a", "b"]);
    }

    #[test]
    fn twitter_api_timestamp_format() {
        let ts = parse_timestamp("Fri Sep 04 10:00:00 +0000 2015").unwrap();
        assert_eq!(format_timestamp(&ts), "2015-09-04T10:00:00Z");
        let ts = parse_timestamp("2015-09-04T12:00:00.750+02:00").unwrap();
        assert_eq!(format_timestamp(&ts), "2015-09-04T10:00:00Z");
    }

    #[test]
    fn extract_hashtag_examples() {
        assert!(extract_hashtags("no tags here").is_empty());
        assert_eq!(
            extract_hashtags("#RefugeesWelcome and #norefugees!"),
            ["refugeeswelcome", "norefugees"]
        );
        assert_eq!(extract_hashtags("##a #b#c"), ["a", "b", "c"]);
        assert_eq!(extract_hashtags("#x #x # #"), ["x", "x"]);
        assert_eq!(extract_hashtags("#été #a_1é"), ["a_1"]);
    }

    fn tweet(id: &str, tags: &[&str]) -> TweetRecord {
        TweetRecord {
            tweet_id: id.into(),
            author_id: format!("u{id}"),
            created_at: parse_timestamp("2015-09-01T00:00:00Z").unwrap(),
            text: String::new(),
            hashtags: tags.iter().map(|s| s.to_string()).collect(),
            gps: None,
            place_name: None,
            user_location_text: None,
        }
    }

    #[test]
    fn filter_examples() {
        let corpus = Corpus::from_records(vec![
            tweet("1", &["refugeecrisis"]),
            tweet("2", &["pizza"]),
            tweet("3", &["refugeecrisis", "x"]),
            tweet("4", &[]),
            tweet("5", &["y"]),
        ]);
        let topics = TopicHashtags::new(["#RefugeeCrisis"]);
        let relevant = filter_relevant(&corpus, &topics).unwrap();
        assert_eq!(relevant.len(), 2);
        assert_eq!(relevant.stats().n_total, 5);
        assert_eq!(relevant.stats().n_relevant, 2);
        assert_eq!(relevant.stats().n_users, 2);

        let none = filter_relevant(&corpus, &TopicHashtags::new(["nothing"])).unwrap();
        assert!(none.is_empty());

        let all = TopicHashtags::new(["refugeecrisis", "pizza", "y"]);
        let only_tagged = filter_relevant(&corpus, &all).unwrap();
        let again = filter_relevant(&only_tagged, &all).unwrap();
        assert_eq!(only_tagged, again);

        assert!(matches!(
            filter_relevant(&corpus, &TopicHashtags::default()),
            Err(IngestError::EmptyTopicSet)
        ));
    }

    #[test]
    fn topic_file_parsing() {
        let topics = TopicHashtags::parse("# topics\nRefugeesWelcome\n#refugeecrisis\n\n  #\n#  note\nmigrants\n");
        let tags: Vec<_> = topics.iter().collect();
        assert_eq!(tags, ["migrants", "refugeecrisis", "refugeeswelcome"]);
    }

    /// Character-by-character reference tokenizer for the hashtag grammar.
    fn reference_hashtags(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut current: Option<String> = None;
        for c in text.chars() {
            let word = c.is_ascii_alphanumeric() || c == '_';
            current = match (current.take(), c, word) {
                (Some(mut tag), _, true) => {
                    tag.push(c.to_ascii_lowercase());
                    Some(tag)
                }
                (Some(tag), _, false) => {
                    if !tag.is_empty() {
                        out.push(tag);
                    }
                    (c == '#').then(String::new)
                }
                (None, '#', _) => Some(String::new()),
                (None, _, _) => None,
            };
        }
        if let Some(tag) = current.filter(|t| !t.is_empty()) {
            out.push(tag);
        }
        out
    }

    proptest! {
        #[test]
        fn extraction_matches_reference(text in "[#a-zA-Z0-9_ !.é\u{1F600}-]{0,40}") {
            prop_assert_eq!(extract_hashtags(&text), reference_hashtags(&text));
        }

        #[test]
        fn extracted_tags_satisfy_invariants(text in "\\PC{0,60}") {
            for tag in extract_hashtags(&text) {
                prop_assert!(!tag.is_empty());
                prop_assert!(!tag.starts_with('#'));
                prop_assert!(!tag.chars().any(char::is_whitespace));
                prop_assert_eq!(tag.to_lowercase(), tag.clone());
            }
        }

        #[test]
        fn parse_is_deterministic_and_filter_is_subset(
            rows in proptest::collection::vec((0u8..20, 0u8..5, 0u32..5, proptest::collection::vec(0u8..4, 0..3)), 0..30)
        ) {
            let lines: Vec<String> = rows.iter().map(|(id, author, day, tags)| {
                let text = tags.iter().map(|t| format!("#T{t}")).collect::<Vec<_>>().join(" ");
                line(&id.to_string(), &author.to_string(), &format!("2015-09-{:02}T00:00:00Z", day + 1), &text)
            }).collect();
            let input = lines.join("\n");
            let a = parse(&input).corpus;
            let b = parse(&input).corpus;
            prop_assert_eq!(&a, &b);

            let topics = TopicHashtags::new(["t0", "t2"]);
            let f = filter_relevant(&a, &topics).unwrap();
            let ids: HashSet<_> = a.tweets().iter().map(|t| &t.tweet_id).collect();
            prop_assert!(f.tweets().iter().all(|t| ids.contains(&t.tweet_id)));
            let again = filter_relevant(&f, &topics).unwrap();
            prop_assert_eq!(again.tweets(), f.tweets());
        }
    }
}
