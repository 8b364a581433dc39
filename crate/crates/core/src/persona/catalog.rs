//! Prompt templates keyed `<role>.<phase>`, with `{placeholder}` substitution.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use once_cell::sync::Lazy;
use regex::Regex;
use thiserror::Error;

use crate::protocol::{indefinite_article, Role};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("no prompt template for {key}")]
    Missing { key: String },
    #[error("template {key} uses {{{name}}} but no value was supplied")]
    UnresolvedPlaceholder { name: String, key: String },
}

#[derive(Debug, Error)]
pub enum CatalogLoadError {
    #[error("reading prompt directory {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

macro_rules! builtin_templates {
    ($($key:literal),* $(,)?) => {
        &[$(($key, include_str!(concat!("../../prompts/", $key, ".txt")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin_templates![
    "any.exemplar",
    "any.reask",
    "debater.baseline",
    "debater.describe",
    "debater.inquiry_color",
    "debater.inquiry_location",
    "debater.inquiry_relation",
    "debater.inquiry_shape",
    "debater.inquiry_size",
    "debater.round0",
    "debater.round2",
    "debater.round3",
    "debater.sro_recheck",
    "debater.sro_reevaluate",
    "judge.cause",
    "judge.judge",
    "judge.reask",
    "propagation.full",
    "propagation.partial",
    "propagation.round3",
];

static BUILTIN_CATALOG: Lazy<Catalog> = Lazy::new(|| Catalog {
    templates: BUILTIN
        .iter()
        .map(|(k, v)| (k.to_string(), normalize(v)))
        .collect(),
});

static PLACEHOLDER: Lazy<Regex> = Lazy::new(|| Regex::new(r"\{\{|\}\}|\{([a-z0-9_]+)\}").unwrap());

fn normalize(text: &str) -> String {
    text.trim_end().to_string()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    templates: BTreeMap<String, String>,
}

impl Catalog {
    /// Templates shipped with the crate.
    pub fn builtin() -> &'static Catalog {
        &BUILTIN_CATALOG
    }

    pub fn from_templates(templates: BTreeMap<String, String>) -> Self {
        Self {
            templates: templates.into_iter().map(|(k, v)| (k, normalize(&v))).collect(),
        }
    }

    /// The built-in templates overlaid with every `*.txt` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Catalog, CatalogLoadError> {
        let io_err = |source| CatalogLoadError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut catalog = Catalog::builtin().clone();
        let mut entries: Vec<_> = fs::read_dir(dir)
            .map_err(io_err)?
            .collect::<Result<_, _>>()
            .map_err(io_err)?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(key) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text = fs::read_to_string(&path).map_err(|source| CatalogLoadError::Io {
                path: path.display().to_string(),
                source,
            })?;
            catalog.templates.insert(key.to_string(), normalize(&text));
        }
        Ok(catalog)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.templates.get(key).map(String::as_str)
    }

    /// Key used for `phase` when asking `role`: `<role>.<phase>`, then
    /// `debater.<phase>` for either debater, then `any.<phase>`.
    pub fn resolve(&self, role: Role, phase: &str) -> Result<String, TemplateError> {
        let mut candidates = vec![format!("{}.{phase}", role.as_str())];
        if role.is_debater() {
            candidates.push(format!("debater.{phase}"));
        }
        candidates.push(format!("any.{phase}"));
        candidates
            .into_iter()
            .find(|k| self.templates.contains_key(k))
            .ok_or_else(|| TemplateError::Missing {
                key: format!("{}.{phase}", role.as_str()),
            })
    }

    /// `object` and `article` variables for an object name.
    pub fn object_vars(&self, object: &str) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("object".to_string(), object.to_string()),
            ("article".to_string(), indefinite_article(object).to_string()),
        ])
    }

    pub fn render_key(&self, key: &str, vars: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        let template = self.get(key).ok_or_else(|| TemplateError::Missing { key: key.to_string() })?;
        substitute(key, template, vars)
    }

    pub fn render(&self, role: Role, phase: &str, vars: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        let key = self.resolve(role, phase)?;
        self.render_key(&key, vars)
    }
}

/// Replace every `{name}` from `vars`; `{{` and `}}` produce literal braces.
pub fn substitute(key: &str, template: &str, vars: &BTreeMap<String, String>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut last = 0;
    for caps in PLACEHOLDER.captures_iter(template) {
        let whole = caps.get(0).unwrap();
        out.push_str(&template[last..whole.start()]);
        match caps.get(1) {
            Some(name) => {
                let value = vars.get(name.as_str()).ok_or_else(|| TemplateError::UnresolvedPlaceholder {
                    name: name.as_str().to_string(),
                    key: key.to_string(),
                })?;
                out.push_str(value);
            }
            None => out.push_str(&whole.as_str()[..1]),
        }
        last = whole.end();
    }
    out.push_str(&template[last..]);
    Ok(out)
}
