use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{assignment_str, ClassLabel, PtrState, TweetPolarity, UserTable};

#[derive(thiserror::Error, Debug)]
pub enum AssignmentIoError {
    #[error("I/O error")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: unknown class {class:?}")]
    Class { line: usize, class: String },
}

#[derive(Serialize)]
struct TweetRow<'a> {
    tweet_id: &'a str,
    class: &'static str,
}

#[derive(Serialize)]
struct UserRow<'a> {
    author_id: &'a str,
    class: &'static str,
}

#[derive(Deserialize)]
struct AssignmentRow {
    #[serde(alias = "author_id")]
    tweet_id: String,
    class: String,
}

pub fn write_tweet_assignments<W: Write>(tweets: &[TweetPolarity], mut out: W) -> io::Result<()> {
    let mut rows: Vec<&TweetPolarity> = tweets.iter().collect();
    rows.sort_by(|a, b| a.tweet_id.cmp(&b.tweet_id));
    for t in rows {
        serde_json::to_writer(
            &mut out,
            &TweetRow {
                tweet_id: &t.tweet_id,
                class: assignment_str(t.assignment),
            },
        )?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_user_assignments<W: Write>(users: &UserTable, mut out: W) -> io::Result<()> {
    for user in users.values() {
        serde_json::to_writer(
            &mut out,
            &UserRow {
                author_id: &user.author_id,
                class: assignment_str(user.assignment),
            },
        )?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Hashtag-map report: `hashtag, class, S_pos, S_neg, iteration_added`.
pub fn write_hashtag_map<W: Write>(state: &PtrState, mut out: W) -> io::Result<()> {
    writeln!(out, "hashtag\tclass\tS_pos\tS_neg\titeration_added")?;
    for (tag, class) in state.hashtag_map.iter() {
        let [s_pos, s_neg] = state.scores.get(tag).copied().unwrap_or([0.0, 0.0]);
        let added = state.iteration_added.get(tag).copied().unwrap_or(0);
        writeln!(out, "{tag}\t{class}\t{s_pos:.8}\t{s_neg:.8}\t{added}")?;
    }
    Ok(())
}

fn read_assignments<R: BufRead>(reader: R) -> Result<BTreeMap<String, Option<ClassLabel>>, AssignmentIoError> {
    let mut out = BTreeMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: AssignmentRow =
            serde_json::from_str(&line).map_err(|source| AssignmentIoError::Json { line: n + 1, source })?;
        let class = match row.class.as_str() {
            "none" => None,
            other => Some(other.parse::<ClassLabel>().map_err(|_| AssignmentIoError::Class {
                line: n + 1,
                class: row.class.clone(),
            })?),
        };
        out.insert(row.tweet_id, class);
    }
    Ok(out)
}

/// Reads `{tweet_id, class}` lines.
pub fn read_tweet_assignments<R: BufRead>(
    reader: R,
) -> Result<BTreeMap<String, Option<ClassLabel>>, AssignmentIoError> {
    read_assignments(reader)
}

/// Reads `{author_id, class}` lines.
pub fn read_user_assignments<R: BufRead>(
    reader: R,
) -> Result<BTreeMap<String, Option<ClassLabel>>, AssignmentIoError> {
    read_assignments(reader)
}
