//! The run configuration: one JSON document with `backends`, `personas`,
//! `debate`, `dataset` and `output` sections. Every field has a default.
//!
//! ```json
//! {
//!   "backends": {
//!     "specs": [{"id": "gpt", "kind": "openai_compatible_http",
//!                "endpoint": "https://api.openai.com/v1/chat/completions",
//!                "model": "gpt-4o", "credential_env_var": "OPENAI_API_KEY"}],
//!     "judge": "gpt"
//!   },
//!   "personas": {"set": "default"},
//!   "debate": {"mode": "mad", "max_debate_rounds": 3},
//!   "dataset": {"path": "coco_pope_random.jsonl", "image_root": "val2014"},
//!   "output": {"dir": "runs/gpt", "parallel": 4}
//! }
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::DEFAULT_PARALLELISM;
use crate::gateway::BackendSpec;
use crate::protocol::{DebateConfig, Split, ValidationError};
use crate::runner::{AgentAssignment, DEFAULT_PROMPT_CHAR_BUDGET};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config field `{path}`: {message}")]
    Field { path: String, message: String },
    #[error("config: {0}")]
    Invalid(String),
}

impl From<ValidationError> for ConfigError {
    fn from(e: ValidationError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendsSection {
    pub specs: Vec<BackendSpec>,
    /// Backend per role; each defaults to the first spec.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub debater_a: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub debater_b: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersonasSection {
    /// Built-in set name or path to a persona JSON file. Overrides `debate.persona_set`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub set: Option<String>,
    /// Directory of `*.txt` templates overlaid on the built-in catalog.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompts_dir: Option<PathBuf>,
    /// Exemplar store replacing the built-in one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exemplars: Option<PathBuf>,
    /// Longest prompt, in characters, that may still carry an exemplar.
    pub prompt_char_budget: Option<usize>,
}

impl Default for PersonasSection {
    fn default() -> Self {
        Self {
            set: None,
            prompts_dir: None,
            exemplars: None,
            prompt_char_budget: Some(DEFAULT_PROMPT_CHAR_BUDGET),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_root: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patch: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub parallel: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            parallel: DEFAULT_PARALLELISM,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub backends: BackendsSection,
    pub personas: PersonasSection,
    pub debate: DebateConfig,
    pub dataset: DatasetSection,
    pub output: OutputSection,
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

/// Userinfo or a key-like query parameter in a URL.
fn endpoint_carries_secret(url: &str) -> bool {
    let rest = url.split_once("://").map_or(url, |(_, r)| r);
    let authority = rest.split(['/', '?', '#']).next().unwrap_or("");
    if authority.contains('@') {
        return true;
    }
    let Some((_, query)) = url.split_once('?') else {
        return false;
    };
    query.split('&').any(|pair| {
        let name = pair.split('=').next().unwrap_or("").to_ascii_lowercase();
        ["key", "api_key", "apikey", "token", "access_token", "secret", "password"].contains(&name.as_str())
    })
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::Field {
                path,
                message: e.into_inner().to_string(),
            }
        })
    }

    /// Load and resolve relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.rebase(base);
        Ok(config)
    }

    pub fn rebase(&mut self, base: &Path) {
        for spec in &mut self.backends.specs {
            rebase(base, &mut spec.script);
        }
        rebase(base, &mut self.personas.prompts_dir);
        rebase(base, &mut self.personas.exemplars);
        rebase(base, &mut self.dataset.path);
        rebase(base, &mut self.dataset.image_root);
        rebase(base, &mut self.dataset.patch);
        rebase(base, &mut self.output.dir);
        if let Some(set) = &mut self.personas.set {
            if set.ends_with(".json") && Path::new(set.as_str()).is_relative() {
                *set = base.join(&*set).display().to_string();
            }
        }
    }

    /// Persona set actually in force.
    pub fn persona_set(&self) -> &str {
        self.personas.set.as_deref().unwrap_or(&self.debate.persona_set)
    }

    pub fn assignment(&self) -> Result<AgentAssignment, ConfigError> {
        let first = self
            .backends
            .specs
            .first()
            .map(|s| s.id.clone())
            .ok_or_else(|| ConfigError::Invalid("backends.specs is empty".into()))?;
        let pick = |field: &str, v: &Option<String>| -> Result<String, ConfigError> {
            let id = v.clone().unwrap_or_else(|| first.clone());
            if self.backends.specs.iter().any(|s| s.id == id) {
                Ok(id)
            } else {
                Err(ConfigError::Field {
                    path: format!("backends.{field}"),
                    message: format!("no backend with id {id:?}"),
                })
            }
        };
        Ok(AgentAssignment {
            debater_a: pick("debater_a", &self.backends.debater_a)?,
            debater_b: pick("debater_b", &self.backends.debater_b)?,
            judge: pick("judge", &self.backends.judge)?,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut debate = self.debate.clone();
        debate.persona_set = self.persona_set().to_string();
        debate.validate()?;
        self.assignment()?;
        for (i, spec) in self.backends.specs.iter().enumerate() {
            spec.validate().map_err(|e| ConfigError::Field {
                path: format!("backends.specs[{i}]"),
                message: e.to_string(),
            })?;
            if let Some(endpoint) = &spec.endpoint {
                if endpoint_carries_secret(endpoint) {
                    return Err(ConfigError::Field {
                        path: format!("backends.specs[{i}].endpoint"),
                        message: "endpoint appears to embed a credential; name an environment variable in credential_env_var instead".into(),
                    });
                }
            }
        }
        if self.output.parallel == 0 {
            return Err(ConfigError::Field {
                path: "output.parallel".into(),
                message: "must be at least 1".into(),
            });
        }
        if self.dataset.path.is_none() {
            return Err(ConfigError::Field {
                path: "dataset.path".into(),
                message: "no dataset given".into(),
            });
        }
        Ok(())
    }

    /// Credential variables that are named by HTTP backends but not set.
    pub fn missing_credentials(&self, env: &dyn Fn(&str) -> Option<String>) -> Vec<String> {
        let mut missing: Vec<String> = self
            .backends
            .specs
            .iter()
            .filter(|s| s.kind.is_http())
            .filter_map(|s| s.credential_env_var.clone())
            .filter(|var| env(var).map_or(true, |v| v.is_empty()))
            .collect();
        missing.sort();
        missing.dedup();
        missing
    }
}
