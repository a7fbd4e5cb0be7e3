//! Enrichment and polarization analytics for streams of tweet-like records.
//!
//! The crate is organised as a pipeline:
//!
//! * [`ingest`] parses JSON-lines records, extracts hashtags and keeps the
//!   topic-relevant subset.
//! * [`geo`] resolves author locations and mentioned places against a
//!   GeoNames-style gazetteer.
//! * [`ptr`] runs the iterative tweet/user/hashtag polarization classifier.
//! * [`analytics`] builds the sentiment indices, time series and the
//!   hashtag variance ranking.
//! * [`synth`] generates corpora with planted ground truth for evaluation.

pub mod analytics;
pub mod geo;
pub mod ingest;
pub mod ptr;
pub mod synth;

pub use geo::{CountryCode, EnrichedTweet, Gazetteer, ResolvedLocation};
pub use ingest::{Corpus, CorpusStats, TweetRecord};
pub use ptr::{ClassLabel, HashtagClassMap, PtrConfig, PtrState};
