//! Location resolution for tweet authors and for places mentioned in text.
//!
//! Author locations come from, in order of preference, the GPS fix (nearest
//! city within [`GPS_SNAP_RADIUS_KM`]), the `place` field and the free-text
//! profile location. Mentioned locations are matched in the tweet text with
//! the same toponym matcher used for the free-text fields.

mod gazetteer;
mod matcher;
mod normalize;

use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gazetteer::{haversine_km, CountryCode, EntryKind, Gazetteer, GazetteerEntry, GazetteerError};
pub use matcher::{find_toponyms, ToponymMatch, MAX_NGRAM};
pub use normalize::{compact_name, normalize_name};

use crate::ingest::{format_timestamp, parse_timestamp, Corpus, CorpusStats, GeoPoint, TweetRecord};

pub const GPS_SNAP_RADIUS_KM: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationSource {
    Gps,
    Place,
    FreeText,
    TextMention,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedLocation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub city_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country_code: Option<CountryCode>,
    pub source: LocationSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<(usize, usize)>,
}

impl ResolvedLocation {
    fn from_entry(entry: &GazetteerEntry, source: LocationSource, span: Option<(usize, usize)>) -> Self {
        ResolvedLocation {
            city_id: entry.city_id().map(String::from),
            country_code: Some(entry.country_code),
            source,
            span,
        }
    }

    pub fn is_city(&self) -> bool {
        self.city_id.is_some()
    }
}

/// Matches toponyms in free text. Results carry [`LocationSource::FreeText`]
/// and byte spans into `text`; cities resolve with their country.
pub fn match_location_text(text: &str, gz: &Gazetteer) -> Vec<ResolvedLocation> {
    find_toponyms(text, gz)
        .into_iter()
        .map(|m| ResolvedLocation::from_entry(gz.entry(m.entry), LocationSource::FreeText, Some((m.start, m.end))))
        .collect()
}

/// Picks the most specific match of a location field: the first city, or
/// failing that the first country.
fn best_field_match(text: &str, gz: &Gazetteer, source: LocationSource) -> Option<ResolvedLocation> {
    let matches = match_location_text(text, gz);
    let chosen = matches
        .iter()
        .find(|l| l.is_city())
        .or_else(|| matches.first())?
        .clone();
    Some(ResolvedLocation { source, ..chosen })
}

pub fn resolve_user_location(tweet: &TweetRecord, gz: &Gazetteer) -> Option<ResolvedLocation> {
    if let Some(point) = tweet.gps {
        if let Some(idx) = gz.nearest_city(point, GPS_SNAP_RADIUS_KM) {
            return Some(ResolvedLocation::from_entry(gz.entry(idx), LocationSource::Gps, None));
        }
    }
    if let Some(found) = tweet
        .place_name
        .as_deref()
        .and_then(|place| best_field_match(place, gz, LocationSource::Place))
    {
        return Some(found);
    }
    tweet
        .user_location_text
        .as_deref()
        .and_then(|text| best_field_match(text, gz, LocationSource::FreeText))
}

pub fn extract_mentioned_locations(tweet: &TweetRecord, gz: &Gazetteer) -> Vec<ResolvedLocation> {
    match_location_text(&tweet.text, gz)
        .into_iter()
        .map(|l| ResolvedLocation {
            source: LocationSource::TextMention,
            ..l
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichedTweet {
    pub base: TweetRecord,
    pub user_location: Option<ResolvedLocation>,
    pub mentioned_locations: Vec<ResolvedLocation>,
}

impl EnrichedTweet {
    pub fn user_country(&self) -> Option<CountryCode> {
        self.user_location.as_ref().and_then(|l| l.country_code)
    }

    /// Distinct countries mentioned in the text, in code order.
    pub fn mentioned_countries(&self) -> BTreeSet<CountryCode> {
        self.mentioned_locations.iter().filter_map(|l| l.country_code).collect()
    }
}

pub fn enrich_tweet(tweet: &TweetRecord, gz: &Gazetteer) -> EnrichedTweet {
    EnrichedTweet {
        base: tweet.clone(),
        user_location: resolve_user_location(tweet, gz),
        mentioned_locations: extract_mentioned_locations(tweet, gz),
    }
}

/// Enriched tweets in corpus order with updated statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnrichedCorpus {
    pub tweets: Vec<EnrichedTweet>,
    pub stats: CorpusStats,
}

impl EnrichedCorpus {
    pub fn from_tweets(tweets: Vec<EnrichedTweet>, base: CorpusStats) -> Self {
        let stats = CorpusStats {
            n_with_user_location: tweets.iter().filter(|t| t.user_location.is_some()).count(),
            n_with_mentioned_location: tweets.iter().filter(|t| !t.mentioned_locations.is_empty()).count(),
            ..base
        };
        EnrichedCorpus { tweets, stats }
    }

    /// Plain records, for the classifier.
    pub fn to_corpus(&self) -> Corpus {
        Corpus::from_records(self.tweets.iter().map(|t| t.base.clone()).collect())
    }
}

pub fn enrich_corpus(corpus: &Corpus, gz: &Gazetteer) -> EnrichedCorpus {
    let tweets: Vec<EnrichedTweet> = corpus.tweets().par_iter().map(|t| enrich_tweet(t, gz)).collect();
    EnrichedCorpus::from_tweets(tweets, corpus.stats().clone())
}

/// Wire form of an enriched tweet. The raw free-text profile location is
/// kept under `user_location_text`; `user_location` holds the resolution.
#[derive(Serialize, Deserialize)]
struct EnrichedWire {
    tweet_id: String,
    author_id: String,
    created_at: String,
    text: String,
    hashtags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    place: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    user_location_text: Option<String>,
    user_location: Option<ResolvedLocation>,
    mentioned_locations: Vec<ResolvedLocation>,
}

#[derive(thiserror::Error, Debug)]
pub enum EnrichedIoError {
    #[error("I/O error")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: bad created_at {value:?}")]
    Timestamp { line: usize, value: String },
}

pub fn write_enriched<W: Write>(tweets: &[EnrichedTweet], mut out: W) -> io::Result<()> {
    for t in tweets {
        let b = &t.base;
        let wire = EnrichedWire {
            tweet_id: b.tweet_id.clone(),
            author_id: b.author_id.clone(),
            created_at: format_timestamp(&b.created_at),
            text: b.text.clone(),
            hashtags: b.hashtags.clone(),
            lat: b.gps.map(|g| g.lat),
            lon: b.gps.map(|g| g.lon),
            place: b.place_name.clone(),
            user_location_text: b.user_location_text.clone(),
            user_location: t.user_location.clone(),
            mentioned_locations: t.mentioned_locations.clone(),
        };
        serde_json::to_writer(&mut out, &wire)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads the enriched JSON-lines format written by [`write_enriched`].
/// Unlike raw ingest, any bad line is an error: the file is our own output.
pub fn read_enriched<R: BufRead>(reader: R) -> Result<Vec<EnrichedTweet>, EnrichedIoError> {
    let mut tweets = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: EnrichedWire =
            serde_json::from_str(&line).map_err(|source| EnrichedIoError::Json { line: n + 1, source })?;
        let created_at: DateTime<Utc> = parse_timestamp(&wire.created_at).ok_or_else(|| EnrichedIoError::Timestamp {
            line: n + 1,
            value: wire.created_at.clone(),
        })?;
        let gps = match (wire.lat, wire.lon) {
            (Some(lat), Some(lon)) => GeoPoint::new(lat, lon),
            _ => None,
        };
        tweets.push(EnrichedTweet {
            base: TweetRecord {
                tweet_id: wire.tweet_id,
                author_id: wire.author_id,
                created_at,
                text: wire.text,
                hashtags: wire.hashtags,
                gps,
                place_name: wire.place,
                user_location_text: wire.user_location_text,
            },
            user_location: wire.user_location,
            mentioned_locations: wire.mentioned_locations,
        });
    }
    Ok(tweets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tweet(text: &str) -> TweetRecord {
        TweetRecord {
            tweet_id: "1".into(),
            author_id: "a".into(),
            created_at: parse_timestamp("2015-09-04T10:00:00Z").unwrap(),
            text: text.into(),
            hashtags: vec![],
            gps: None,
            place_name: None,
            user_location_text: None,
        }
    }

    fn ids(gz: &Gazetteer, locs: &[ResolvedLocation]) -> Vec<String> {
        locs.iter()
            .map(|l| match &l.city_id {
                Some(id) => gz.by_id(id).unwrap().id.clone(),
                None => l.country_code.unwrap().to_string(),
            })
            .collect()
    }

    #[test]
    fn gps_has_priority() {
        let gz = Gazetteer::mini();
        let mut t = tweet("");
        t.gps = GeoPoint::new(51.50, -0.12);
        t.user_location_text = Some("Nowhere".into());
        let loc = resolve_user_location(&t, &gz).unwrap();
        assert_eq!(loc.source, LocationSource::Gps);
        assert_eq!(loc.city_id.as_deref(), Some("gb-london"));
        assert_eq!(loc.country_code.unwrap().as_str(), "GB");
    }

    #[test]
    fn free_text_resolution() {
        let gz = Gazetteer::mini();
        let mut t = tweet("");
        t.user_location_text = Some("London, UK".into());
        let loc = resolve_user_location(&t, &gz).unwrap();
        assert_eq!(loc.source, LocationSource::FreeText);
        assert_eq!(loc.city_id.as_deref(), Some("gb-london"));
        assert_eq!(loc.country_code.unwrap().as_str(), "GB");
        assert_eq!(loc.span, Some((0, 6)));
    }

    #[test]
    fn place_beats_free_text_and_gps_falls_through() {
        let gz = Gazetteer::mini();
        let mut t = tweet("");
        t.gps = GeoPoint::new(0.0, -30.0);
        t.place_name = Some("Wien".into());
        t.user_location_text = Some("Berlin".into());
        let loc = resolve_user_location(&t, &gz).unwrap();
        assert_eq!(loc.source, LocationSource::Place);
        assert_eq!(loc.city_id.as_deref(), Some("at-vienna"));
    }

    #[test]
    fn nothing_to_resolve() {
        let gz = Gazetteer::mini();
        assert!(resolve_user_location(&tweet("Paris!"), &gz).is_none());
        let mut t = tweet("");
        t.user_location_text = Some("the internet".into());
        assert!(resolve_user_location(&t, &gz).is_none());
    }

    #[test]
    fn match_examples() {
        let gz = Gazetteer::mini();
        assert_eq!(ids(&gz, &match_location_text("Calais jungle", &gz)), ["fr-calais"]);
        assert_eq!(ids(&gz, &match_location_text("Paris", &gz)), ["fr-paris"]);
        assert!(match_location_text("I love pizza", &gz).is_empty());
        assert_eq!(ids(&gz, &match_location_text("Bosnia and Herzegovina", &gz)), ["BA"]);
    }

    #[test]
    fn population_rule_on_two_row_gazetteer() {
        let text = "id\tprimary_name\talternate_names\tlatitude\tlongitude\tcountry_code\tpopulation\tkind\n\
                    us-paris\tParis\t\t33.66\t-95.56\tUS\t25000\tcity\n\
                    fr-paris\tParis\t\t48.86\t2.35\tFR\t2100000\tcity\n";
        let gz = Gazetteer::from_reader(text.as_bytes()).unwrap();
        let found = match_location_text("Paris", &gz);
        assert_eq!(found[0].city_id.as_deref(), Some("fr-paris"));
    }

    #[test]
    fn mention_examples() {
        let gz = Gazetteer::mini();
        let m = extract_mentioned_locations(&tweet("refugees stuck at Hungary border"), &gz);
        assert_eq!(ids(&gz, &m), ["HU"]);
        assert_eq!(m[0].source, LocationSource::TextMention);
        assert!(m[0].city_id.is_none());

        let text = "from Greece to Macedonia";
        let m = extract_mentioned_locations(&tweet(text), &gz);
        assert_eq!(ids(&gz, &m), ["GR", "MK"]);
        let (a, b) = (m[0].span.unwrap(), m[1].span.unwrap());
        assert!(a.1 <= b.0);
        assert_eq!(&text[a.0..a.1], "Greece");
        assert_eq!(&text[b.0..b.1], "Macedonia");

        assert!(extract_mentioned_locations(&tweet("so sad today"), &gz).is_empty());
    }

    #[test]
    fn enriched_round_trip() {
        let gz = Gazetteer::mini();
        let mut t = tweet("#refugeeswelcome in Munich");
        t.hashtags = vec!["refugeeswelcome".into()];
        t.user_location_text = Some("Köln".into());
        t.gps = GeoPoint::new(10.0, 10.0);
        let enriched = vec![enrich_tweet(&t, &gz)];
        let mut buf = Vec::new();
        write_enriched(&enriched, &mut buf).unwrap();
        let back = read_enriched(buf.as_slice()).unwrap();
        assert_eq!(back, enriched);
        let line = String::from_utf8(buf).unwrap();
        assert!(line.contains(r#""user_location":{"city_id":"de-cologne","country_code":"DE","source":"free_text""#));
    }

    #[test]
    fn enrich_counts_located_tweets() {
        let gz = Gazetteer::mini();
        let mut a = tweet("news from Syria");
        a.user_location_text = Some("Glasgow".into());
        let mut b = tweet("nothing");
        b.tweet_id = "2".into();
        let out = enrich_corpus(&Corpus::from_records(vec![a, b]), &gz);
        assert_eq!(out.stats.n_with_user_location, 1);
        assert_eq!(out.stats.n_with_mentioned_location, 1);
        assert_eq!(out.stats.n_total, 2);
    }

    fn arb_text() -> impl Strategy<Value = String> {
        let words = prop::sample::select(vec![
            "London", "paris", "UK", "new", "york", "city", "United", "Kingdom", "Hungary", "the", "to", "Köln",
            "Bosnia", "and", "Herzegovina", "Birmingham", "US", "Syria", "hello", "#Greece", "@Berlin", ",", ".",
            "-", "Stoke-on-Trent", "LONDRES", "Saint", "Étienne",
        ]);
        prop::collection::vec(words, 0..12).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn spans_are_sound_and_disjoint(text in arb_text()) {
            let gz = Gazetteer::mini();
            let found = match_location_text(&text, &gz);
            let mut last_end = 0;
            for loc in &found {
                let (s, e) = loc.span.unwrap();
                prop_assert!(s >= last_end);
                last_end = e;
                let key = normalize_name(&text[s..e]);
                prop_assert!(!gz.lookup(&key).is_empty(), "{key}");
                if let Some(city) = &loc.city_id {
                    prop_assert_eq!(Some(gz.by_id(city).unwrap().country_code), loc.country_code);
                }
            }
        }

        #[test]
        fn gps_never_lowers_priority(
            text in arb_text(), lat in -90.0f64..90.0, lon in -180.0f64..180.0
        ) {
            let gz = Gazetteer::mini();
            let mut t = tweet("");
            t.user_location_text = Some(text);
            let without = resolve_user_location(&t, &gz);
            t.gps = GeoPoint::new(lat, lon);
            let with = resolve_user_location(&t, &gz);
            match with {
                Some(loc) if loc.source == LocationSource::Gps => {}
                other => prop_assert_eq!(other, without),
            }
        }
    }
}
