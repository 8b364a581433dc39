//! Worked-debate exemplars and the keyword scenario classifier that selects them.

use std::fmt;
use std::fs;
use std::path::Path;

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EXEMPLAR_CHAR_CAP: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioTag {
    Sports,
    Kitchen,
    Office,
    Street,
    Bedroom,
    Bathroom,
    Outdoors,
    Animals,
    Transport,
    Other,
}

impl ScenarioTag {
    pub const ALL: [ScenarioTag; 10] = [
        ScenarioTag::Sports,
        ScenarioTag::Kitchen,
        ScenarioTag::Office,
        ScenarioTag::Street,
        ScenarioTag::Bedroom,
        ScenarioTag::Bathroom,
        ScenarioTag::Outdoors,
        ScenarioTag::Animals,
        ScenarioTag::Transport,
        ScenarioTag::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioTag::Sports => "sports",
            ScenarioTag::Kitchen => "kitchen",
            ScenarioTag::Office => "office",
            ScenarioTag::Street => "street",
            ScenarioTag::Bedroom => "bedroom",
            ScenarioTag::Bathroom => "bathroom",
            ScenarioTag::Outdoors => "outdoors",
            ScenarioTag::Animals => "animals",
            ScenarioTag::Transport => "transport",
            ScenarioTag::Other => "other",
        }
    }
}

impl fmt::Display for ScenarioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateExemplar {
    pub id: String,
    pub scenario: ScenarioTag,
    pub condensed_transcript: String,
    pub outcome_note: String,
}

#[derive(Debug, Error)]
pub enum ExemplarError {
    #[error("reading exemplar store {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing exemplar store: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("exemplar {0} has an empty transcript")]
    Empty(String),
    #[error("exemplar {id} transcript has {len} characters, over the {EXEMPLAR_CHAR_CAP} cap")]
    TooLong { id: String, len: usize },
    #[error("duplicate exemplar id {0}")]
    Duplicate(String),
}

/// Read-only collection of exemplars.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExemplarStore {
    exemplars: Vec<DebateExemplar>,
}

static BUILTIN_STORE: Lazy<ExemplarStore> = Lazy::new(|| {
    ExemplarStore::from_json(include_str!("../../data/exemplars.json")).expect("built-in exemplars are valid")
});

impl ExemplarStore {
    pub fn builtin() -> &'static ExemplarStore {
        &BUILTIN_STORE
    }

    pub fn new(exemplars: Vec<DebateExemplar>) -> Result<Self, ExemplarError> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &exemplars {
            if e.condensed_transcript.trim().is_empty() {
                return Err(ExemplarError::Empty(e.id.clone()));
            }
            let len = e.condensed_transcript.chars().count();
            if len > EXEMPLAR_CHAR_CAP {
                return Err(ExemplarError::TooLong { id: e.id.clone(), len });
            }
            if !seen.insert(e.id.as_str()) {
                return Err(ExemplarError::Duplicate(e.id.clone()));
            }
        }
        Ok(Self { exemplars })
    }

    pub fn from_json(text: &str) -> Result<Self, ExemplarError> {
        Self::new(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ExemplarError> {
        let text = fs::read_to_string(path).map_err(|source| ExemplarError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn exemplars(&self) -> &[DebateExemplar] {
        &self.exemplars
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }
}

/// Exemplar for `scenario`, else the first `other` one, else none.
pub fn select_exemplar(scenario: ScenarioTag, store: Option<&ExemplarStore>) -> Option<&DebateExemplar> {
    let store = store?;
    store
        .exemplars
        .iter()
        .find(|e| e.scenario == scenario)
        .or_else(|| store.exemplars.iter().find(|e| e.scenario == ScenarioTag::Other))
}

#[derive(Debug, Clone, Deserialize)]
struct KeywordRow {
    tag: ScenarioTag,
    keywords: Vec<String>,
}

/// Ordered keyword table; the first row with a hit wins.
#[derive(Debug, Clone)]
pub struct ScenarioTable {
    rows: Vec<KeywordRow>,
}

static BUILTIN_TABLE: Lazy<ScenarioTable> = Lazy::new(|| ScenarioTable {
    rows: serde_json::from_str(include_str!("../../data/scenario_keywords.json")).expect("built-in keyword table"),
});

impl ScenarioTable {
    pub fn builtin() -> &'static ScenarioTable {
        &BUILTIN_TABLE
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self {
            rows: serde_json::from_str(text)?,
        })
    }

    pub fn classify(&self, description: &str) -> ScenarioTag {
        let words: Vec<String> = description
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        let hit = |kw: &str| {
            words.iter().any(|w| {
                w == kw || w.strip_suffix('s').is_some_and(|s| s == kw) || w.strip_suffix("es").is_some_and(|s| s == kw)
            })
        };
        self.rows
            .iter()
            .find(|row| row.keywords.iter().any(|k| hit(&k.to_lowercase())))
            .map(|row| row.tag)
            .unwrap_or(ScenarioTag::Other)
    }
}

/// Scenario of an image from its one-sentence description, using the built-in table.
pub fn classify_scenario(description: &str) -> ScenarioTag {
    ScenarioTable::builtin().classify(description)
}
