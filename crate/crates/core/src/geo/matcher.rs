//! Toponym matching over free text.
//!
//! Text is split into segments at punctuation (commas included) and into
//! tokens at whitespace. Within a segment, n-grams of up to
//! [`MAX_NGRAM`] tokens are looked up longest first, left to right; a
//! token is consumed by at most one match.

use std::collections::BTreeSet;

use super::gazetteer::{CountryCode, EntryKind, Gazetteer};
use super::normalize::normalize_name;

pub const MAX_NGRAM: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub start: usize,
    pub end: usize,
    pub norm: String,
    /// Preceded directly by `@`, i.e. part of a user handle.
    pub handle: bool,
}

/// A matched n-gram with its gazetteer candidates.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Span {
    pub start: usize,
    pub end: usize,
    pub candidates: Vec<usize>,
}

/// A resolved toponym: the chosen gazetteer entry and its byte span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToponymMatch {
    pub entry: usize,
    pub start: usize,
    pub end: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || unicode_normalization::char::is_combining_mark(c)
}

fn is_joiner(c: char) -> bool {
    matches!(c, '-' | '\'' | '\u{2019}')
}

/// Splits text into segments of tokens.
pub(crate) fn segments(text: &str) -> Vec<Vec<Token>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut current: Vec<Token> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if !is_word_char(c) {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            i += 1;
            continue;
        }
        let handle = i > 0 && chars[i - 1].1 == '@';
        let mut j = i + 1;
        while j < chars.len() {
            let c = chars[j].1;
            if is_word_char(c) {
                j += 1;
            } else if is_joiner(c) && chars.get(j + 1).is_some_and(|&(_, n)| is_word_char(n)) {
                j += 2;
            } else {
                break;
            }
        }
        let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
        current.push(Token {
            start: pos,
            end,
            norm: normalize_name(&text[pos..end]),
            handle,
        });
        i = j;
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Longest-match-first scan; returns non-overlapping spans in text order.
pub(crate) fn scan(text: &str, gz: &Gazetteer) -> (Vec<Span>, Vec<Token>) {
    let mut spans = Vec::new();
    let mut all_tokens = Vec::new();
    let mut key = String::new();
    for segment in segments(text) {
        let mut i = 0;
        while i < segment.len() {
            let longest = MAX_NGRAM.min(segment.len() - i);
            let mut matched = 0;
            if !segment[i].handle {
                for n in (1..=longest).rev() {
                    key.clear();
                    for (k, tok) in segment[i..i + n].iter().enumerate() {
                        if k > 0 {
                            key.push(' ');
                        }
                        key.push_str(&tok.norm);
                    }
                    let candidates = gz.lookup_normalized(&key);
                    if !candidates.is_empty() {
                        spans.push(Span {
                            start: segment[i].start,
                            end: segment[i + n - 1].end,
                            candidates: candidates.to_vec(),
                        });
                        matched = n;
                        break;
                    }
                }
            }
            i += matched.max(1);
        }
        all_tokens.extend(segment);
    }
    (spans, all_tokens)
}

/// Finds toponyms in `text` and picks one gazetteer entry per match.
///
/// Homonyms are narrowed to candidates in a country named elsewhere in the
/// same text (by name, or by an uppercase two-letter country code), then
/// the most populous candidate wins; remaining ties go to the entry that
/// comes first in the gazetteer.
pub fn find_toponyms(text: &str, gz: &Gazetteer) -> Vec<ToponymMatch> {
    let (spans, tokens) = scan(text, gz);
    let code_mentions: BTreeSet<CountryCode> = tokens
        .iter()
        .filter_map(|t| {
            let raw = &text[t.start..t.end];
            if raw.len() == 2 && raw.bytes().all(|b| b.is_ascii_uppercase()) {
                raw.parse::<CountryCode>().ok().filter(|c| gz.has_country_code(*c))
            } else {
                None
            }
        })
        .collect();

    spans
        .iter()
        .enumerate()
        .map(|(si, span)| {
            let mut context = code_mentions.clone();
            for (oi, other) in spans.iter().enumerate() {
                if oi == si {
                    continue;
                }
                context.extend(
                    other
                        .candidates
                        .iter()
                        .map(|&c| gz.entry(c))
                        .filter(|e| e.kind == EntryKind::Country)
                        .map(|e| e.country_code),
                );
            }
            ToponymMatch {
                entry: choose_candidate(&span.candidates, &context, gz),
                start: span.start,
                end: span.end,
            }
        })
        .collect()
}

fn choose_candidate(candidates: &[usize], context: &BTreeSet<CountryCode>, gz: &Gazetteer) -> usize {
    let constrained: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&c| context.contains(&gz.entry(c).country_code))
        .collect();
    let pool = if constrained.is_empty() { candidates } else { &constrained };
    *pool
        .iter()
        .max_by(|&&a, &&b| {
            gz.entry(a)
                .population
                .cmp(&gz.entry(b).population)
                .then_with(|| b.cmp(&a))
        })
        .expect("spans always carry candidates")
}
