use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// `label idx:val idx:val ...` row; indices are 0-based here, 1-based on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledVector {
    pub label: f64,
    pub features: Vec<(usize, f64)>,
}

impl LabeledVector {
    pub fn dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(i, v) in &self.features {
            if i < dim {
                out[i] = v;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub rows: Vec<LabeledVector>,
    /// Largest 1-based index seen.
    pub dim: usize,
}

pub fn parse_labeled<R: BufRead>(reader: R) -> Result<LabeledDataset, DataError> {
    let mut data = LabeledDataset::default();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        // trailing comments are common in these files
        let line = line.split('#').next().unwrap_or("");
        let mut tokens = line.split_whitespace();
        let Some(label) = tokens.next() else {
            continue;
        };
        let label: f64 = label.parse().map_err(|_| DataError::Parse {
            line: lineno,
            message: format!("unparseable label `{label}`"),
        })?;
        let mut features = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (i, v) = tok.split_once(':').ok_or_else(|| DataError::Parse {
                line: lineno,
                message: format!("expected idx:val, found `{tok}`"),
            })?;
            let i: usize = i.parse().map_err(|_| DataError::Parse {
                line: lineno,
                message: format!("bad feature index `{i}`"),
            })?;
            let v: f64 = v.parse().map_err(|_| DataError::Parse {
                line: lineno,
                message: format!("bad feature value `{v}`"),
            })?;
            if i == 0 {
                return Err(DataError::Parse {
                    line: lineno,
                    message: "feature indices are 1-based".into(),
                });
            }
            if i <= last {
                return Err(DataError::Parse {
                    line: lineno,
                    message: format!("feature index {i} not ascending after {last}"),
                });
            }
            last = i;
            features.push((i - 1, v));
        }
        data.dim = data.dim.max(last);
        data.rows.push(LabeledVector { label, features });
    }
    Ok(data)
}

pub fn write_labeled(rows: &[LabeledVector]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&r.label.to_string());
        for (i, v) in &r.features {
            out.push(' ');
            out.push_str(&(i + 1).to_string());
            out.push(':');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}
