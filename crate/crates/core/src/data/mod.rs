//! Dataset ingestion: ratings triples, sparse labeled vectors, binarization
//! into interaction histories, deterministic sharding, synthetic generators.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

mod labeled;
mod ratings;
mod shard;
pub mod synth;

pub use labeled::{parse_labeled, write_labeled, LabeledDataset, LabeledVector};
pub use ratings::{binarize, parse_ratings, write_ratings, Delimiter, RatingsRecord};
pub use shard::{shard, shard_index};

/// One user's interaction set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub id: String,
    pub items: BTreeSet<usize>,
}

/// Binary user × item history.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InteractionHistory {
    pub users: Vec<UserRecord>,
    pub item_count: usize,
    /// Original item tokens by index, when known.
    #[serde(default)]
    pub item_tokens: Vec<String>,
}

impl InteractionHistory {
    pub fn new(item_count: usize, users: Vec<UserRecord>) -> Result<Self, ModelError> {
        let history = Self {
            users,
            item_count,
            item_tokens: Vec::new(),
        };
        history.validate()?;
        Ok(history)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen = HashSet::new();
        for u in &self.users {
            if !seen.insert(u.id.as_str()) {
                return Err(ModelError::InputDomain(format!(
                    "duplicate user id `{}`",
                    u.id
                )));
            }
            if let Some(&max) = u.items.iter().next_back() {
                if max >= self.item_count {
                    return Err(ModelError::InputDomain(format!(
                        "user `{}` references item {max} beyond {} items",
                        u.id, self.item_count
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn user(&self, id: &str) -> Option<&UserRecord> {
        self.users.iter().find(|u| u.id == id)
    }

    /// History with `id` removed.
    pub fn without_user(&self, id: &str) -> InteractionHistory {
        InteractionHistory {
            users: self.users.iter().filter(|u| u.id != id).cloned().collect(),
            item_count: self.item_count,
            item_tokens: self.item_tokens.clone(),
        }
    }
}
