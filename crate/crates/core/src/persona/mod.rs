//! Role-playing personas, the prompt catalog, and exemplar selection.

mod catalog;
mod exemplar;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inquiry::ObjectDossier;
use crate::protocol::{ProbeItem, Role};

pub use catalog::{substitute, Catalog, CatalogLoadError, TemplateError};
pub use exemplar::{
    classify_scenario, select_exemplar, DebateExemplar, ExemplarError, ExemplarStore, ScenarioTable, ScenarioTag,
    EXEMPLAR_CHAR_CAP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StanceStyle {
    Conservative,
    Imaginative,
    Neutral,
}

impl StanceStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            StanceStyle::Conservative => "conservative",
            StanceStyle::Imaginative => "imaginative",
            StanceStyle::Neutral => "neutral",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub role: Role,
    pub stance_style: StanceStyle,
    pub system_prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaSet {
    pub name: String,
    pub debater_a: Persona,
    pub debater_b: Persona,
    pub judge: Persona,
    /// Persona of the lone agent in baseline and self-reflection runs.
    pub single_agent: Persona,
}

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("reading persona set {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing persona set: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("persona set {set}: slot {slot} holds a {found} persona")]
    RoleMismatch { set: String, slot: &'static str, found: Role },
    #[error("persona set {set}: slot {slot} has an empty system prompt")]
    EmptyPrompt { set: String, slot: &'static str },
}

const BUILTIN_SETS: &[(&str, &str)] = &[
    ("default", include_str!("../../personas/default.json")),
    ("neutral", include_str!("../../personas/neutral.json")),
];

impl PersonaSet {
    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN_SETS.iter().map(|(n, _)| *n)
    }

    pub fn builtin(name: &str) -> Option<PersonaSet> {
        BUILTIN_SETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, json)| PersonaSet::from_json(json).expect("built-in persona sets are valid"))
    }

    pub fn from_json(text: &str) -> Result<PersonaSet, PersonaError> {
        let set: PersonaSet = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }

    /// A built-in set by name, or a JSON file by path.
    pub fn load(name_or_path: &str) -> Result<PersonaSet, PersonaError> {
        if let Some(set) = PersonaSet::builtin(name_or_path) {
            return Ok(set);
        }
        let path = Path::new(name_or_path);
        let text = fs::read_to_string(path).map_err(|source| PersonaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        PersonaSet::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), PersonaError> {
        let slots: [(&'static str, &Persona, &[Role]); 4] = [
            ("debater_a", &self.debater_a, &[Role::DebaterA]),
            ("debater_b", &self.debater_b, &[Role::DebaterB]),
            ("judge", &self.judge, &[Role::Judge]),
            ("single_agent", &self.single_agent, &[Role::DebaterA, Role::DebaterB]),
        ];
        for (slot, persona, allowed) in slots {
            if !allowed.contains(&persona.role) {
                return Err(PersonaError::RoleMismatch {
                    set: self.name.clone(),
                    slot,
                    found: persona.role,
                });
            }
            if persona.system_prompt.trim().is_empty() {
                return Err(PersonaError::EmptyPrompt {
                    set: self.name.clone(),
                    slot,
                });
            }
        }
        Ok(())
    }

    pub fn for_role(&self, role: Role) -> &Persona {
        match role {
            Role::DebaterA => &self.debater_a,
            Role::DebaterB => &self.debater_b,
            Role::Judge => &self.judge,
        }
    }
}

/// Everything a template may draw on.
#[derive(Debug, Clone)]
pub struct PromptContext<'a> {
    pub item: &'a ProbeItem,
    pub persona: &'a Persona,
    pub dossier: Option<&'a ObjectDossier>,
    pub hint: Option<&'a str>,
    pub exemplar: Option<&'a DebateExemplar>,
    /// Additional named values, e.g. `feedback` or `transcript`.
    pub extras: BTreeMap<String, String>,
    /// Upper bound on system plus user characters; an exemplar that would
    /// break it is left out.
    pub char_budget: Option<usize>,
}

impl<'a> PromptContext<'a> {
    pub fn new(item: &'a ProbeItem, persona: &'a Persona) -> Self {
        Self {
            item,
            persona,
            dossier: None,
            hint: None,
            exemplar: None,
            extras: BTreeMap::new(),
            char_budget: None,
        }
    }

    pub fn with_extra(mut self, name: &str, value: impl Into<String>) -> Self {
        self.extras.insert(name.to_string(), value.into());
        self
    }

    fn vars(&self, catalog: &Catalog) -> BTreeMap<String, String> {
        let mut vars = catalog.object_vars(&self.item.object_name);
        vars.insert("question".into(), self.item.question_text.clone());
        if let Some(d) = self.dossier {
            vars.insert("dossier".into(), d.summary());
        }
        if let Some(h) = self.hint {
            vars.insert("hint".into(), h.to_string());
        }
        vars.extend(self.extras.iter().map(|(k, v)| (k.clone(), v.clone())));
        vars
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
    /// Id of the exemplar included in `user`, if any.
    pub exemplar_id: Option<String>,
}

impl RenderedPrompt {
    pub fn char_len(&self) -> usize {
        self.system.chars().count() + self.user.chars().count()
    }
}

pub fn render_prompt(role: Role, phase: &str, ctx: &PromptContext<'_>) -> Result<RenderedPrompt, TemplateError> {
    render_prompt_with(Catalog::builtin(), role, phase, ctx)
}

pub fn render_prompt_with(
    catalog: &Catalog,
    role: Role,
    phase: &str,
    ctx: &PromptContext<'_>,
) -> Result<RenderedPrompt, TemplateError> {
    let body = catalog.render(role, phase, &ctx.vars(catalog))?;
    let plain = RenderedPrompt {
        system: ctx.persona.system_prompt.clone(),
        user: body.clone(),
        exemplar_id: None,
    };
    let Some(exemplar) = ctx.exemplar else {
        return Ok(plain);
    };
    let vars = BTreeMap::from([("exemplar".to_string(), exemplar.condensed_transcript.clone())]);
    let block = catalog.render(role, "exemplar", &vars)?;
    let with = RenderedPrompt {
        system: plain.system.clone(),
        user: format!("{block}\n\n{body}"),
        exemplar_id: Some(exemplar.id.clone()),
    };
    match ctx.char_budget {
        Some(budget) if with.char_len() > budget => Ok(plain),
        _ => Ok(with),
    }
}
