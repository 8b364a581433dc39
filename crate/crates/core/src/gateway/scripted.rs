//! Deterministic replies from a script file, for tests and dry runs.
//!
//! Two file shapes are accepted:
//!
//! * a JSON array of replies, consumed in order per (item, role);
//! * an object keyed `<role>:<round>:<message_kind>`, optionally prefixed
//!   with `<item_id>#`. Any of the three parts may be `*`. A value is a
//!   string (reused on every match), an array (consumed in order), or
//!   `{"rules": [{"contains": ..., "reply": ...}], "default": ...}`, which
//!   picks the first rule whose text occurs in the prompt.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{AgentRequest, AttemptError, Backend, BackendReply, GatewayError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub contains: String,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Fixed(String),
    Queue(Vec<String>),
    Rules {
        rules: Vec<Rule>,
        #[serde(default)]
        default: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Script {
    Sequence(Vec<String>),
    Keyed(BTreeMap<String, Entry>),
}

#[derive(Debug)]
pub struct ScriptedBackend {
    script: Script,
    cursors: Mutex<BTreeMap<(String, String), usize>>,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        Self {
            script,
            cursors: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn from_responses<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self::new(Script::Sequence(responses.into_iter().map(Into::into).collect()))
    }

    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        serde_json::from_str(text)
            .map(Self::new)
            .map_err(|e| GatewayError::Script(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path).map_err(|e| GatewayError::Script(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            GatewayError::Script(m) => GatewayError::Script(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn next_in(&self, item: &str, key: &str, queue: &[String]) -> Option<String> {
        let mut cursors = self.cursors.lock().unwrap();
        let cursor = cursors.entry((item.to_string(), key.to_string())).or_insert(0);
        let reply = queue.get(*cursor).cloned();
        if reply.is_some() {
            *cursor += 1;
        }
        reply
    }

    /// Reply for `request`, or the key that found nothing.
    pub fn reply(&self, request: &AgentRequest) -> Result<String, GatewayError> {
        let ctx = &request.context;
        let role = request.role.as_str();
        match &self.script {
            Script::Sequence(lines) => self
                .next_in(&ctx.item_id, role, lines)
                .ok_or_else(|| GatewayError::ScriptExhausted {
                    key: format!("{}#{role}", ctx.item_id),
                }),
            Script::Keyed(map) => {
                let round = ctx.round.to_string();
                let kind = ctx.message_kind.map(|k| k.as_str()).unwrap_or("*");
                let exact = format!("{}#{role}:{round}:{kind}", ctx.item_id);
                for prefix in [format!("{}#", ctx.item_id), String::new()] {
                    for r in [role, "*"] {
                        for rd in [round.as_str(), "*"] {
                            for k in [kind, "*"] {
                                let key = format!("{prefix}{r}:{rd}:{k}");
                                let Some(entry) = map.get(&key) else { continue };
                                let found = match entry {
                                    Entry::Fixed(s) => Some(s.clone()),
                                    Entry::Queue(q) => self.next_in(&ctx.item_id, &key, q),
                                    Entry::Rules { rules, default } => {
                                        let prompt = request.prompt().to_lowercase();
                                        rules
                                            .iter()
                                            .find(|rule| prompt.contains(&rule.contains.to_lowercase()))
                                            .map(|rule| rule.reply.clone())
                                            .or_else(|| default.clone())
                                    }
                                };
                                return found.ok_or(GatewayError::ScriptExhausted { key });
                            }
                        }
                    }
                }
                Err(GatewayError::ScriptExhausted { key: exact })
            }
        }
    }
}

impl Backend for ScriptedBackend {
    fn call(&self, request: &AgentRequest) -> Result<BackendReply, AttemptError> {
        self.reply(request)
            .map(|text| BackendReply {
                text,
                ..Default::default()
            })
            .map_err(AttemptError::Fatal)
    }
}
