//! Text snapshot format shared by all models.
//!
//! ```text
//! decfl-snapshot v1 <kind> key=value ...
//! <tag> <field> <field> ...
//! ```
//!
//! Records are emitted in ascending key order so identical logical states
//! produce identical bytes. Floats use the shortest representation that
//! round-trips.

use std::collections::BTreeMap;
use std::str::FromStr;

use super::ModelKind;
use crate::error::ModelError;

pub(crate) const MAGIC: &str = "decfl-snapshot";
pub(crate) const VERSION: &str = "v1";

pub(crate) struct Header {
    pub kind: ModelKind,
    pub params: BTreeMap<String, String>,
}

fn err(msg: impl Into<String>) -> ModelError {
    ModelError::Snapshot(msg.into())
}

impl Header {
    pub fn parse(text: &str) -> Result<Header, ModelError> {
        let line = text.lines().next().ok_or_else(|| err("empty snapshot"))?;
        let mut tokens = line.split_whitespace();
        if tokens.next() != Some(MAGIC) {
            return Err(err("missing snapshot magic"));
        }
        match tokens.next() {
            Some(VERSION) => {}
            Some(v) => return Err(err(format!("unsupported snapshot version `{v}`"))),
            None => return Err(err("missing snapshot version")),
        }
        let kind = tokens
            .next()
            .ok_or_else(|| err("missing model kind"))?
            .parse::<ModelKind>()
            .map_err(|e| err(e.to_string()))?;
        let mut params = BTreeMap::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| err(format!("malformed header parameter `{tok}`")))?;
            params.insert(k.to_string(), v.to_string());
        }
        Ok(Header { kind, params })
    }

    pub fn expect_kind(&self, kind: ModelKind) -> Result<(), ModelError> {
        if self.kind != kind {
            return Err(err(format!(
                "expected {kind} snapshot, found {}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ModelError> {
        let raw = self
            .params
            .get(key)
            .ok_or_else(|| err(format!("missing header parameter `{key}`")))?;
        raw.parse::<T>()
            .map_err(|_| err(format!("bad value `{raw}` for `{key}`")))
    }
}

pub(crate) fn header_line(kind: ModelKind, params: &[(&str, String)]) -> String {
    let mut line = format!("{MAGIC} {VERSION} {kind}");
    for (k, v) in params {
        line.push(' ');
        line.push_str(k);
        line.push('=');
        line.push_str(v);
    }
    line.push('\n');
    line
}

/// Iterates over the record lines (everything after the header).
pub(crate) fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| (n + 1, l.split_whitespace().collect()))
}

pub(crate) fn field<T: FromStr>(fields: &[&str], idx: usize, line: usize) -> Result<T, ModelError> {
    let raw = fields
        .get(idx)
        .ok_or_else(|| err(format!("line {line}: missing field {idx}")))?;
    raw.parse::<T>()
        .map_err(|_| err(format!("line {line}: bad field `{raw}`")))
}
