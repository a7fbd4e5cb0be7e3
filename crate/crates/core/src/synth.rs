//! Synthetic corpora with planted polarization.
//!
//! Users are planted positive, negative or neutral. Planted users draw most
//! hashtags from their class vocabulary (Zipf-weighted, so the first tags,
//! which double as seeds, are the most popular), some from a shared
//! vocabulary and a few, at `noise_rate`, from the opposite class. Neutral
//! users only use the shared vocabulary. Every user gets a location from the
//! gazetteer, written as GPS, place or free text.
//!
//! Randomness comes from one ChaCha stream per user, keyed by the run seed
//! and the user index, so generation is parallel and still deterministic.

use std::collections::BTreeMap;
use std::io::{self, Write};

use chrono::{DateTime, Duration, Utc};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, Zipf};
use rayon::prelude::*;
use serde::Serialize;

use crate::geo::{compact_name, normalize_name, EntryKind, Gazetteer, GazetteerEntry};
use crate::ingest::{Corpus, GeoPoint, TweetRecord};
use crate::ptr::{assignment_str, ClassLabel, HashtagClassMap, PtrState, UserTable};

#[derive(thiserror::Error, Debug, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_days: u32,
    pub tweets_per_user_mean: f64,
    /// Fractions of positive, negative and neutral users.
    pub class_mix: [f64; 3],
    /// Vocabulary sizes of the positive, negative and shared sets.
    pub vocab: [usize; 3],
    /// Probability that a hashtag of a planted user comes from the other
    /// class.
    pub noise_rate: f64,
    /// Probability that a hashtag of a planted user comes from the shared
    /// vocabulary.
    pub shared_rate: f64,
    pub seed_tags_per_class: [usize; 2],
    /// Probability that a tweet also tags the author's city.
    pub location_tag_rate: f64,
    /// Probability that a tweet names a place in its text.
    pub mention_rate: f64,
    pub start: DateTime<Utc>,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 1000,
            n_days: 30,
            tweets_per_user_mean: 10.0,
            class_mix: [0.5, 0.5, 0.0],
            vocab: [30, 30, 40],
            noise_rate: 0.05,
            shared_rate: 0.10,
            seed_tags_per_class: [3, 3],
            location_tag_rate: 0.05,
            mention_rate: 0.3,
            start: DateTime::from_timestamp(1_440_720_000, 0).expect("valid constant"), // 2015-08-28
            rng_seed: 42,
        }
    }
}

fn check_fraction(name: &str, x: f64) -> Result<(), SynthError> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(SynthError::Config(format!("{name} must be in [0, 1], got {x}")))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_users == 0 || self.n_days == 0 {
            return Err(SynthError::Config("users and days must be positive".into()));
        }
        if !(self.tweets_per_user_mean >= 1.0 && self.tweets_per_user_mean.is_finite()) {
            return Err(SynthError::Config(format!(
                "tweets per user must be at least 1, got {}",
                self.tweets_per_user_mean
            )));
        }
        for (name, x) in ["positive", "negative", "neutral"].iter().zip(self.class_mix) {
            check_fraction(&format!("{name} fraction"), x)?;
        }
        let total: f64 = self.class_mix.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SynthError::Config(format!("class fractions sum to {total}, not 1")));
        }
        if !(0.0..0.5).contains(&self.noise_rate) {
            return Err(SynthError::Config(format!(
                "noise rate must be in [0, 0.5), got {}",
                self.noise_rate
            )));
        }
        check_fraction("shared rate", self.shared_rate)?;
        if self.noise_rate + self.shared_rate >= 1.0 {
            return Err(SynthError::Config("noise and shared rates leave no own-class tags".into()));
        }
        check_fraction("location tag rate", self.location_tag_rate)?;
        check_fraction("mention rate", self.mention_rate)?;
        for class in ClassLabel::ALL {
            let (seeds, vocab) = (self.seed_tags_per_class[class.index()], self.vocab[class.index()]);
            if seeds == 0 {
                return Err(SynthError::Config(format!("class {class} needs at least one seed tag")));
            }
            if vocab < seeds {
                return Err(SynthError::Config(format!(
                    "class {class} vocabulary ({vocab}) is smaller than its seed count ({seeds})"
                )));
            }
        }
        if self.vocab[2] == 0 {
            return Err(SynthError::Config("shared vocabulary must not be empty".into()));
        }
        Ok(())
    }
}

/// Planted labels. `None` marks neutral users, shared and location
/// hashtags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub users: BTreeMap<String, Option<ClassLabel>>,
    /// Every hashtag that occurs in the corpus.
    pub hashtags: BTreeMap<String, Option<ClassLabel>>,
    /// The planted class of each tweet's author.
    pub tweets: BTreeMap<String, Option<ClassLabel>>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub corpus: Corpus,
    pub truth: GroundTruth,
    pub seeds: HashtagClassMap,
}

pub fn vocab_tag(class: Option<ClassLabel>, i: usize) -> String {
    match class {
        Some(ClassLabel::Positive) => format!("pro{i}"),
        Some(ClassLabel::Negative) => format!("anti{i}"),
        None => format!("talk{i}"),
    }
}

struct Sampler {
    own: [Zipf<f64>; 2],
    shared: Zipf<f64>,
    tweets: Option<Poisson<f64>>,
    cities: Vec<usize>,
}

fn zipf(n: usize) -> Zipf<f64> {
    Zipf::new(n as f64, 1.0).expect("positive vocabulary")
}

fn draw(dist: &Zipf<f64>, rng: &mut ChaCha8Rng) -> usize {
    dist.sample(rng) as usize - 1
}

fn planted_class(config: &SynthConfig, u: f64) -> Option<ClassLabel> {
    if u < config.class_mix[0] {
        Some(ClassLabel::Positive)
    } else if u < config.class_mix[0] + config.class_mix[1] {
        Some(ClassLabel::Negative)
    } else {
        None
    }
}

fn country_of<'a>(gz: &'a Gazetteer, city: &GazetteerEntry) -> Option<&'a GazetteerEntry> {
    gz.by_id(city.country_code.as_str())
}

fn generate_user(
    index: usize,
    config: &SynthConfig,
    gz: &Gazetteer,
    sampler: &Sampler,
) -> (String, Option<ClassLabel>, Vec<TweetRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    rng.set_stream(index as u64);

    let author = format!("user{index:05}");
    let class = planted_class(config, rng.random::<f64>());
    let n_tweets = 1 + sampler.tweets.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);

    let home = gz.entry(sampler.cities[rng.random_range(0..sampler.cities.len())]);
    let mut gps = None;
    let mut place_name = None;
    let mut user_location_text = None;
    match rng.random_range(0..20) {
        0..=2 => {
            gps = GeoPoint::new(
                home.latitude + rng.random_range(-0.05..0.05),
                home.longitude + rng.random_range(-0.05..0.05),
            )
        }
        3..=4 => place_name = Some(home.primary_name.clone()),
        5..=16 => {
            user_location_text = Some(match country_of(gz, home) {
                Some(c) => format!("{}, {}", home.primary_name, c.primary_name),
                None => home.primary_name.clone(),
            })
        }
        _ => {}
    }
    let home_tag = compact_name(&normalize_name(&home.primary_name));

    let span = i64::from(config.n_days) * 86_400;
    let tweets = (0..n_tweets)
        .map(|t| {
            let n_tags = rng.random_range(1..=3);
            let mut hashtags = Vec::with_capacity(n_tags + 1);
            for _ in 0..n_tags {
                let tag = match class {
                    None => vocab_tag(None, draw(&sampler.shared, &mut rng)),
                    Some(c) => {
                        let u: f64 = rng.random();
                        if u < config.noise_rate {
                            vocab_tag(Some(c.other()), draw(&sampler.own[c.other().index()], &mut rng))
                        } else if u < config.noise_rate + config.shared_rate {
                            vocab_tag(None, draw(&sampler.shared, &mut rng))
                        } else {
                            vocab_tag(Some(c), draw(&sampler.own[c.index()], &mut rng))
                        }
                    }
                };
                hashtags.push(tag);
            }
            if rng.random_bool(config.location_tag_rate) {
                hashtags.push(home_tag.clone());
            }
            let mut text = String::new();
            if rng.random_bool(config.mention_rate) {
                let place = gz.entry(rng.random_range(0..gz.len()));
                text.push_str("news from ");
                text.push_str(&place.primary_name);
            }
            for tag in &hashtags {
                if !text.is_empty() {
                    text.push(' ');
                }
                text.push('#');
                text.push_str(tag);
            }
            TweetRecord {
                tweet_id: format!("{index:05}{t:04}"),
                author_id: author.clone(),
                created_at: config.start + Duration::seconds(rng.random_range(0..span)),
                text,
                hashtags,
                gps,
                place_name: place_name.clone(),
                user_location_text: user_location_text.clone(),
            }
        })
        .collect();
    (author, class, tweets)
}

/// Generates a corpus, its planted labels and the seed map.
pub fn generate(config: &SynthConfig, gz: &Gazetteer) -> Result<SynthOutput, SynthError> {
    config.validate()?;
    let cities: Vec<usize> = (0..gz.len()).filter(|&i| gz.entry(i).kind == EntryKind::City).collect();
    if cities.is_empty() {
        return Err(SynthError::Config("gazetteer has no cities".into()));
    }
    let sampler = Sampler {
        own: [zipf(config.vocab[0]), zipf(config.vocab[1])],
        shared: zipf(config.vocab[2]),
        tweets: (config.tweets_per_user_mean > 1.0)
            .then(|| Poisson::new(config.tweets_per_user_mean - 1.0).expect("positive mean")),
        cities,
    };

    let users: Vec<_> = (0..config.n_users)
        .into_par_iter()
        .map(|i| generate_user(i, config, gz, &sampler))
        .collect();

    let mut truth = GroundTruth::default();
    let mut records = Vec::new();
    for (author, class, tweets) in users {
        for t in &tweets {
            truth.tweets.insert(t.tweet_id.clone(), class);
            for tag in &t.hashtags {
                truth.hashtags.entry(tag.clone()).or_insert_with(|| tag_class(tag));
            }
        }
        truth.users.insert(author, class);
        records.extend(tweets);
    }

    let seeds = HashtagClassMap::from_sets(
        (0..config.seed_tags_per_class[0]).map(|i| vocab_tag(Some(ClassLabel::Positive), i)),
        (0..config.seed_tags_per_class[1]).map(|i| vocab_tag(Some(ClassLabel::Negative), i)),
    )
    .expect("class vocabularies are disjoint");
    Ok(SynthOutput {
        corpus: Corpus::from_records(records),
        truth,
        seeds,
    })
}

fn tag_class(tag: &str) -> Option<ClassLabel> {
    let numbered = |prefix: &str| {
        tag.strip_prefix(prefix)
            .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
    };
    if numbered("pro") {
        Some(ClassLabel::Positive)
    } else if numbered("anti") {
        Some(ClassLabel::Negative)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruthScores {
    pub user_precision: f64,
    pub user_recall: f64,
    pub hashtag_precision: f64,
    pub hashtag_recall: f64,
}

/// `hits / n`, with the vacuous case reported as 1.
fn precision(hits: usize, n: usize) -> f64 {
    if n == 0 {
        1.0
    } else {
        hits as f64 / n as f64
    }
}

fn recall(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

/// Precision and recall of the polarized users and of the hashtag map.
/// Every assignment counts against precision unless it matches a planted
/// class, so polarized neutral users are errors.
pub fn score_against_truth(state: &PtrState, truth: &GroundTruth) -> TruthScores {
    let mut assigned = 0;
    let mut correct = 0;
    for user in state.user_polarity.values() {
        if let Some(c) = user.assignment {
            assigned += 1;
            if truth.users.get(&user.author_id) == Some(&Some(c)) {
                correct += 1;
            }
        }
    }
    let planted = truth.users.values().filter(|c| c.is_some()).count();

    let mut tags_correct = 0;
    for (tag, class) in state.hashtag_map.iter() {
        if truth.hashtags.get(tag) == Some(&Some(class)) {
            tags_correct += 1;
        }
    }
    let planted_tags = truth.hashtags.values().filter(|c| c.is_some()).count();

    TruthScores {
        user_precision: precision(correct, assigned),
        user_recall: recall(correct, planted),
        hashtag_precision: precision(tags_correct, state.hashtag_map.len()),
        hashtag_recall: recall(tags_correct, planted_tags),
    }
}

/// Recall of each planted class, indexed by [`ClassLabel::index`].
pub fn class_recall(users: &UserTable, truth: &GroundTruth) -> [f64; 2] {
    ClassLabel::ALL.map(|class| {
        let planted: Vec<&String> = truth
            .users
            .iter()
            .filter(|(_, c)| **c == Some(class))
            .map(|(a, _)| a)
            .collect();
        let hits = planted
            .iter()
            .filter(|a| users.get(a.as_str()).and_then(|u| u.assignment) == Some(class))
            .count();
        recall(hits, planted.len())
    })
}

#[derive(Serialize)]
struct UserTruth<'a> {
    author_id: &'a str,
    class: &'static str,
}

#[derive(Serialize)]
struct HashtagTruth<'a> {
    hashtag: &'a str,
    class: &'static str,
}

/// Writes user lines `{author_id, class}` followed by hashtag lines
/// `{hashtag, class}`; neutral entries have class `none`.
pub fn write_truth<W: Write>(truth: &GroundTruth, mut out: W) -> io::Result<()> {
    for (author, class) in &truth.users {
        serde_json::to_writer(
            &mut out,
            &UserTruth {
                author_id: author,
                class: assignment_str(*class),
            },
        )?;
        out.write_all(b"\n")?;
    }
    for (tag, class) in &truth.hashtags {
        serde_json::to_writer(
            &mut out,
            &HashtagTruth {
                hashtag: tag,
                class: assignment_str(*class),
            },
        )?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Seed file lines `<class> <hashtag>`.
pub fn write_seeds<W: Write>(seeds: &HashtagClassMap, mut out: W) -> io::Result<()> {
    for (tag, class) in seeds.iter() {
        writeln!(out, "{class} {tag}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::normalize_hashtag;
    use crate::ptr::{ptr_run, PtrConfig};

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_users: 120,
            rng_seed: seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let gz = Gazetteer::mini();
        let a = generate(&small(7), &gz).unwrap();
        let b = generate(&small(7), &gz).unwrap();
        let c = generate(&small(8), &gz).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.truth, b.truth);
        assert_ne!(a.corpus, c.corpus);
    }

    #[test]
    fn same_output_on_any_thread_count() {
        let gz = Gazetteer::mini();
        let run = |n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(|| generate(&small(3), &gz).unwrap().corpus)
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn records_satisfy_ingest_invariants() {
        let gz = Gazetteer::mini();
        let out = generate(&small(1), &gz).unwrap();
        let mut ids = std::collections::HashSet::new();
        for t in out.corpus.tweets() {
            assert!(ids.insert(t.tweet_id.clone()));
            assert!(!t.author_id.is_empty());
            for h in &t.hashtags {
                assert_eq!(normalize_hashtag(h).as_deref(), Some(h.as_str()));
            }
            assert_eq!(crate::ingest::extract_hashtags(&t.text), t.hashtags);
            if let Some(p) = t.gps {
                assert!((-90.0..=90.0).contains(&p.lat) && (-180.0..=180.0).contains(&p.lon));
            }
        }
        assert_eq!(out.truth.users.len(), 120);
        assert_eq!(out.truth.tweets.len(), out.corpus.len());
    }

    #[test]
    fn no_noise_means_no_cross_class_tags() {
        let gz = Gazetteer::mini();
        let config = SynthConfig {
            noise_rate: 0.0,
            ..small(11)
        };
        let out = generate(&config, &gz).unwrap();
        for t in out.corpus.tweets() {
            let author = out.truth.users[&t.author_id];
            for h in &t.hashtags {
                let class = out.truth.hashtags[h];
                assert!(class.is_none() || class == author, "{h} in a tweet of a {author:?} user");
            }
        }
    }

    #[test]
    fn planted_classes_are_recovered() {
        let gz = Gazetteer::mini();
        let config = SynthConfig {
            noise_rate: 0.0,
            shared_rate: 0.0,
            mention_rate: 0.0,
            class_mix: [0.5, 0.5, 0.0],
            vocab: [5, 5, 5],
            seed_tags_per_class: [5, 5],
            ..small(5)
        };
        let out = generate(&config, &gz).unwrap();
        let state = ptr_run(&out.corpus, &out.seeds, &PtrConfig::default(), &gz).unwrap();
        let scores = score_against_truth(&state, &out.truth);
        assert_eq!(scores.user_recall, 1.0);
        assert_eq!(scores.user_precision, 1.0);
    }

    #[test]
    fn neutral_users_bound_coverage() {
        // neutral users talk only about tags no planted user touches
        let gz = Gazetteer::mini();
        let config = SynthConfig {
            n_users: 400,
            class_mix: [0.45, 0.45, 0.10],
            shared_rate: 0.0,
            ..small(9)
        };
        let out = generate(&config, &gz).unwrap();
        let state = ptr_run(&out.corpus, &out.seeds, &PtrConfig::default(), &gz).unwrap();
        let cov = crate::ptr::coverage_stats(&state, &out.corpus).unwrap();
        let neutral = out.truth.users.values().filter(|c| c.is_none()).count();
        assert!(neutral > 0);
        assert!(cov.user_fraction <= 1.0 - neutral as f64 / 400.0);
        assert!(cov.user_fraction <= 0.95);
    }

    #[test]
    fn config_validation() {
        let bad = |c: SynthConfig| c.validate().is_err();
        assert!(bad(SynthConfig {
            noise_rate: 0.6,
            ..SynthConfig::default()
        }));
        assert!(bad(SynthConfig {
            class_mix: [0.5, 0.5, 0.5],
            ..SynthConfig::default()
        }));
        assert!(bad(SynthConfig {
            vocab: [2, 30, 40],
            ..SynthConfig::default()
        }));
        assert!(bad(SynthConfig {
            seed_tags_per_class: [0, 3],
            ..SynthConfig::default()
        }));
        assert!(SynthConfig::default().validate().is_ok());
    }

    #[test]
    fn scoring_conventions() {
        let truth = GroundTruth {
            users: [("a".into(), Some(ClassLabel::Positive)), ("b".into(), None)].into(),
            hashtags: [("pro0".into(), Some(ClassLabel::Positive))].into(),
            tweets: BTreeMap::new(),
        };
        let user = |a: &str, c| crate::ptr::UserPolarity {
            author_id: a.into(),
            assignment: c,
            counts: [0, 0],
        };
        let mut state = PtrState {
            iteration: 1,
            hashtag_map: HashtagClassMap::from_sets(["pro0"], Vec::<&str>::new()).unwrap(),
            tweet_polarity: vec![],
            user_polarity: [
                ("a".into(), user("a", Some(ClassLabel::Positive))),
                ("b".into(), user("b", None)),
            ]
            .into(),
            converged: true,
            scores: BTreeMap::new(),
            iteration_added: BTreeMap::new(),
            history: vec![],
        };
        let s = score_against_truth(&state, &truth);
        assert_eq!(
            (s.user_precision, s.user_recall, s.hashtag_precision, s.hashtag_recall),
            (1.0, 1.0, 1.0, 1.0)
        );

        state.user_polarity.insert("b".into(), user("b", Some(ClassLabel::Negative)));
        assert_eq!(score_against_truth(&state, &truth).user_precision, 0.5);

        for u in state.user_polarity.values_mut() {
            u.assignment = None;
        }
        state.hashtag_map = HashtagClassMap::new();
        let s = score_against_truth(&state, &truth);
        assert_eq!((s.user_precision, s.user_recall), (1.0, 0.0));
        assert_eq!((s.hashtag_precision, s.hashtag_recall), (1.0, 0.0));
    }

    #[test]
    fn truth_sidecar_layout() {
        let truth = GroundTruth {
            users: [("a".into(), Some(ClassLabel::Negative))].into(),
            hashtags: [("talk0".into(), None)].into(),
            tweets: BTreeMap::new(),
        };
        let mut out = Vec::new();
        write_truth(&truth, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "{\"author_id\":\"a\",\"class\":\"neg\"}\n{\"hashtag\":\"talk0\",\"class\":\"none\"}\n"
        );
    }
}
