//! What a run was made of, for reproducing or resuming it.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::gateway::BackendSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    /// Finished, but too many items errored.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub engine_version: String,
    /// Effective configuration, with overrides applied and the output directory left out.
    pub config: RunConfig,
    /// Backend specs. They name credential variables and never hold their values.
    pub backends: Vec<BackendSpec>,
    pub dataset_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_hash: Option<String>,
    pub item_count: usize,
    pub started_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub resumed_at: Vec<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
    pub status: RunStatus,
}

impl RunManifest {
    pub fn new(config: &RunConfig, dataset_hash: String, patch_hash: Option<String>, item_count: usize, now: DateTime<Utc>) -> Self {
        let mut config = config.clone();
        config.output.dir = None;
        Self {
            run_id: uuid::Uuid::new_v4().to_string(),
            engine_version: crate::ENGINE_VERSION.to_string(),
            backends: config.backends.specs.clone(),
            config,
            dataset_hash,
            patch_hash,
            item_count,
            started_at: now,
            resumed_at: Vec::new(),
            finished_at: None,
            status: RunStatus::Running,
        }
    }
}
