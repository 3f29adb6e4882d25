use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use serde::{Deserialize, Serialize};

use decfl::models::{Model, PprModel};
use decfl::privacy::{
    nearest_users, recover_deleted_items, user_similarity_leak, RecoveryReport, UserPair,
};
use decfl::ModelError;

use crate::config::ExperimentConfig;
use crate::dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutput {
    pub deleted_user: String,
    pub report: RecoveryReport,
    /// Surviving users most similar to the deleted one.
    pub neighbours: Vec<(String, f64)>,
    /// Highest-ranked user pairs of the full history.
    pub top_pairs: Vec<UserPair>,
}

pub fn attack(cfg: &ExperimentConfig) -> Result<AttackOutput> {
    let data = dataset::load(cfg)?;
    let Model::Ppr(template) = &data.template else {
        return Err(anyhow!(
            "the attack runs against the similarity model (ppr)"
        ));
    };
    let history = dataset::history_of(&data.records, template.item_count())?;
    let user = match &cfg.attack_user {
        Some(id) => history
            .user(id)
            .ok_or_else(|| ModelError::InputDomain(format!("user `{id}` not in dataset")))?,
        None => history
            .users
            .first()
            .ok_or_else(|| ModelError::InputDomain("dataset has no users".into()))?,
    };
    let stale = PprModel::from_rows(
        history.item_count,
        template.top_k(),
        history.users.iter().map(|u| &u.items),
    )?;
    let updated = history.without_user(&user.id);
    let report = recover_deleted_items(&stale, &updated)?.with_ground_truth(user.items.clone());
    let mut neighbours = nearest_users(&updated, &user.items, &user.id);
    neighbours.truncate(10);
    let mut top_pairs = user_similarity_leak(&history);
    top_pairs.truncate(10);
    Ok(AttackOutput {
        deleted_user: user.id.clone(),
        report,
        neighbours,
        top_pairs,
    })
}

pub fn write(out_dir: &Path, out: &AttackOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("attack.json");
    std::fs::write(&path, serde_json::to_string_pretty(out)? + "\n")?;
    Ok(vec![path])
}
