//! Corrections and exclusions layered over a base probe set.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{Answer, DatasetTag, ProbeItem};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub item_id: String,
    pub new_gold_label: Answer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub item_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchList {
    pub corrections: Vec<Correction>,
    pub exclusions: Vec<Exclusion>,
}

#[derive(Debug, Error)]
pub enum PatchError {
    #[error("reading patch {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing patch: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("item {0} appears more than once in the patch")]
    RepeatedId(String),
    #[error("patch names unknown items: {}", .0.join(", "))]
    UnknownIds(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PatchSummary {
    /// (item, old label, new label)
    pub corrected: Vec<(String, Answer, Answer)>,
    pub excluded: Vec<(String, String)>,
}

impl PatchList {
    pub fn load(path: &Path) -> Result<Self, PatchError> {
        let text = fs::read_to_string(path).map_err(|source| PatchError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let patch: PatchList = serde_json::from_str(&text)?;
        patch.validate()?;
        Ok(patch)
    }

    pub fn is_empty(&self) -> bool {
        self.corrections.is_empty() && self.exclusions.is_empty()
    }

    fn ids(&self) -> impl Iterator<Item = &str> {
        self.corrections
            .iter()
            .map(|c| c.item_id.as_str())
            .chain(self.exclusions.iter().map(|e| e.item_id.as_str()))
    }

    /// Every item id occurs at most once across both lists.
    pub fn validate(&self) -> Result<(), PatchError> {
        let mut seen = BTreeSet::new();
        for id in self.ids() {
            if !seen.insert(id) {
                return Err(PatchError::RepeatedId(id.to_string()));
            }
        }
        Ok(())
    }

    /// Patch ids that match no item.
    pub fn unknown_ids(&self, items: &[ProbeItem]) -> Vec<String> {
        let known: BTreeSet<&str> = items.iter().map(|i| i.id.as_str()).collect();
        self.ids().filter(|id| !known.contains(id)).map(str::to_string).collect()
    }
}

/// Apply corrections and exclusions; surviving items are tagged POPE-R.
pub fn apply_patch(items: &[ProbeItem], patch: &PatchList) -> Result<(Vec<ProbeItem>, PatchSummary), PatchError> {
    patch.validate()?;
    let unknown = patch.unknown_ids(items);
    if !unknown.is_empty() {
        return Err(PatchError::UnknownIds(unknown));
    }
    if patch.is_empty() {
        return Ok((items.to_vec(), PatchSummary::default()));
    }
    let corrections: BTreeMap<&str, Answer> = patch
        .corrections
        .iter()
        .map(|c| (c.item_id.as_str(), c.new_gold_label))
        .collect();
    let exclusions: BTreeMap<&str, &str> = patch
        .exclusions
        .iter()
        .map(|e| (e.item_id.as_str(), e.reason.as_str()))
        .collect();
    let mut summary = PatchSummary::default();
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        if let Some(reason) = exclusions.get(item.id.as_str()) {
            summary.excluded.push((item.id.clone(), reason.to_string()));
            continue;
        }
        let mut item = item.clone();
        if let Some(&label) = corrections.get(item.id.as_str()) {
            summary.corrected.push((item.id.clone(), item.gold_label, label));
            item.gold_label = label;
        }
        if item.dataset_tag == DatasetTag::Pope {
            item.dataset_tag = DatasetTag::PopeR;
        }
        out.push(item);
    }
    tracing::info!(
        corrected = summary.corrected.len(),
        excluded = summary.excluded.len(),
        "patch applied"
    );
    Ok((out, summary))
}
