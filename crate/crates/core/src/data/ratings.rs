use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{InteractionHistory, UserRecord};
use crate::error::DataError;

/// A `user item rating [timestamp]` line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingsRecord {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// Field separator of a ratings file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delimiter(pub String);

impl Delimiter {
    /// Accepts the literal separator or one of `tab`, `comma`, `colons`.
    pub fn parse(name: &str) -> Delimiter {
        match name {
            "tab" | "\\t" => Delimiter("\t".into()),
            "comma" => Delimiter(",".into()),
            "colons" => Delimiter("::".into()),
            other => Delimiter(other.into()),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Default for Delimiter {
    fn default() -> Self {
        Delimiter("::".into())
    }
}

pub fn parse_ratings<R: BufRead>(
    reader: R,
    delimiter: &Delimiter,
) -> Result<Vec<RatingsRecord>, DataError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(delimiter.as_str()).map(str::trim).collect();
        if fields.len() < 3 {
            return Err(DataError::Parse {
                line: lineno,
                message: format!("expected at least 3 fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(DataError::Parse {
                line: lineno,
                message: "empty user or item token".into(),
            });
        }
        let rating: f64 = fields[2].parse().map_err(|_| DataError::Parse {
            line: lineno,
            message: format!("unparseable rating `{}`", fields[2]),
        })?;
        let timestamp = match fields.get(3) {
            Some(t) if !t.is_empty() => Some(t.parse::<i64>().map_err(|_| DataError::Parse {
                line: lineno,
                message: format!("unparseable timestamp `{t}`"),
            })?),
            _ => None,
        };
        out.push(RatingsRecord {
            user: fields[0].to_string(),
            item: fields[1].to_string(),
            rating,
            timestamp,
        });
    }
    Ok(out)
}

pub fn write_ratings(records: &[RatingsRecord], delimiter: &Delimiter) -> String {
    let d = delimiter.as_str();
    let mut out = String::new();
    for r in records {
        out.push_str(&r.user);
        out.push_str(d);
        out.push_str(&r.item);
        out.push_str(d);
        out.push_str(&r.rating.to_string());
        if let Some(t) = r.timestamp {
            out.push_str(d);
            out.push_str(&t.to_string());
        }
        out.push('\n');
    }
    out
}

/// Binary history: a user interacts with an item iff some rating is at least
/// `threshold`. Users and items are indexed by first appearance; users with
/// no kept rating are retained with an empty set.
pub fn binarize(records: &[RatingsRecord], threshold: f64) -> InteractionHistory {
    let mut item_index: HashMap<&str, usize> = HashMap::new();
    let mut item_tokens = Vec::new();
    let mut user_index: HashMap<&str, usize> = HashMap::new();
    let mut users: Vec<UserRecord> = Vec::new();
    for r in records {
        let item = *item_index.entry(r.item.as_str()).or_insert_with(|| {
            item_tokens.push(r.item.clone());
            item_tokens.len() - 1
        });
        let user = *user_index.entry(r.user.as_str()).or_insert_with(|| {
            users.push(UserRecord {
                id: r.user.clone(),
                items: BTreeSet::new(),
            });
            users.len() - 1
        });
        if r.rating >= threshold {
            users[user].items.insert(item);
        }
    }
    InteractionHistory {
        users,
        item_count: item_tokens.len(),
        item_tokens,
    }
}
