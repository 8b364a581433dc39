//! Lexical dossier extraction and the cross-debater propagation policies.
//!
//! Under `Partial` only the object's attributes reach the other debater;
//! location, relations and the rationale stay behind. `Full` forwards
//! everything, including the verbatim answer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inquiry::{AttributeKind, InquiryQuestion, ObjectDossier, QuestionKind, RawAnswer, RegionTag, Relation};
use crate::persona::{Catalog, TemplateError};
use crate::protocol::{indefinite_article, Role, Stance, StanceValue, Turn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyTag {
    Partial,
    Full,
}

impl PolicyTag {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "partial" => Some(PolicyTag::Partial),
            "full" => Some(PolicyTag::Full),
            _ => None,
        }
    }

    pub fn fields(self) -> BTreeSet<MessageField> {
        match self {
            PolicyTag::Partial => [MessageField::Attributes].into(),
            PolicyTag::Full => MessageField::ALL.into(),
        }
    }
}

impl fmt::Display for PolicyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyTag::Partial => "partial",
            PolicyTag::Full => "full",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageField {
    Attributes,
    Region,
    Relations,
    Stance,
    Rationale,
}

impl MessageField {
    pub const ALL: [MessageField; 5] = [
        MessageField::Attributes,
        MessageField::Region,
        MessageField::Relations,
        MessageField::Stance,
        MessageField::Rationale,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagatedMessage {
    pub source_role: Role,
    pub policy: PolicyTag,
    pub included_fields: BTreeSet<MessageField>,
    pub rendered_text: String,
}

#[derive(Debug, Error)]
pub enum PropagationError {
    #[error("round-3 feedback needs a full message, got a {0} one")]
    NotFull(PolicyTag),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

const COLOR_WORDS: &[&str] = &[
    "black", "white", "gray", "grey", "silver", "red", "orange", "yellow", "gold", "golden", "green",
    "blue", "navy", "purple", "violet", "pink", "brown", "beige", "tan", "cream", "maroon", "teal",
    "turquoise", "transparent", "clear", "multicolored", "colorful",
];

const SHAPE_WORDS: &[&str] = &[
    "round", "circular", "oval", "square", "rectangular", "triangular", "cylindrical", "spherical",
    "curved", "flat", "long", "thin", "elongated", "irregular", "hexagonal", "cubic", "conical",
];

const SIZE_WORDS: &[&str] = &[
    "tiny", "small", "little", "medium", "medium-sized", "large", "big", "huge", "giant", "compact",
];

static WORD: Lazy<Regex> = Lazy::new(|| Regex::new(r"[A-Za-z]+(?:-[A-Za-z]+)*").unwrap());
static REGION: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)\b(?:(top|upper|bottom|lower)[\s-]+(left|right)|(center|centre|middle of the image))\b").unwrap()
});

fn first_vocab_word(answer: &str, vocab: &[&str]) -> Option<String> {
    WORD.find_iter(answer)
        .map(|m| m.as_str().to_ascii_lowercase())
        .find(|w| vocab.contains(&w.as_str()))
}

fn sentence_fallback(answer: &str) -> Option<String> {
    let trimmed = answer.trim().trim_end_matches(['.', '!']).trim();
    (!trimmed.is_empty()).then(|| trimmed.to_string())
}

/// The single region token an answer names, if it names exactly one.
pub fn region_in_answer(answer: &str) -> Option<RegionTag> {
    let found: BTreeSet<RegionTag> = REGION
        .captures_iter(answer)
        .filter_map(|c| {
            if c.get(3).is_some() {
                return Some(RegionTag::Center);
            }
            let vertical = c.get(1)?.as_str().to_ascii_lowercase();
            let horizontal = c.get(2)?.as_str().to_ascii_lowercase();
            let top = matches!(vertical.as_str(), "top" | "upper");
            Some(match (top, horizontal.as_str()) {
                (true, "left") => RegionTag::TopLeft,
                (true, _) => RegionTag::TopRight,
                (false, "left") => RegionTag::BottomLeft,
                (false, _) => RegionTag::BottomRight,
            })
        })
        .collect();
    if found.len() == 1 {
        found.into_iter().next()
    } else {
        None
    }
}

/// Build a dossier from inquiry answers without any model call.
pub fn extract_fields(raw_answers: &[(InquiryQuestion, String)]) -> ObjectDossier {
    let mut dossier = ObjectDossier::default();
    for (question, answer) in raw_answers {
        match question.kind {
            QuestionKind::Attribute(kind) => {
                let vocab = match kind {
                    AttributeKind::Color => COLOR_WORDS,
                    AttributeKind::Shape => SHAPE_WORDS,
                    AttributeKind::Size => SIZE_WORDS,
                };
                if let Some(value) = first_vocab_word(answer, vocab).or_else(|| sentence_fallback(answer)) {
                    dossier.attributes.entry(kind).or_insert(value);
                }
            }
            QuestionKind::Location => {
                if dossier.region.is_none() {
                    dossier.region = region_in_answer(answer);
                }
            }
            QuestionKind::Relation => {
                let other = answer.trim();
                if !other.is_empty() {
                    dossier.relations.push(Relation {
                        predicate: "near".to_string(),
                        other_object: other.to_string(),
                    });
                }
            }
        }
        dossier.raw_answers.push(RawAnswer {
            question: question.clone(),
            answer: answer.clone(),
        });
    }
    dossier
}

fn stance_phrase(object: &str, stance: StanceValue) -> String {
    let article = indefinite_article(object);
    match stance {
        StanceValue::Yes => format!("believes there is {article} {object}"),
        StanceValue::No => format!("believes there is no {object}"),
        StanceValue::Unsure => format!("is not sure whether there is {article} {object}"),
    }
}

fn attribute_list(dossier: &ObjectDossier) -> Vec<&str> {
    AttributeKind::ALL
        .iter()
        .filter_map(|k| dossier.attributes.get(k).map(String::as_str))
        .collect()
}

/// Filter `dossier` by `policy` using the built-in rendering templates.
pub fn filter_dossier(source: Role, dossier: &ObjectDossier, stance: &Stance, policy: PolicyTag) -> PropagatedMessage {
    filter_dossier_with(Catalog::builtin(), source, dossier, stance, policy)
        .expect("built-in propagation templates are complete")
}

pub fn filter_dossier_with(
    catalog: &Catalog,
    source: Role,
    dossier: &ObjectDossier,
    stance: &Stance,
    policy: PolicyTag,
) -> Result<PropagatedMessage, TemplateError> {
    let object = dossier.object_name.as_str();
    let mut vars = catalog.object_vars(object);
    vars.insert("stance_phrase".into(), stance_phrase(object, stance.value));
    let attributes = attribute_list(dossier);
    let rendered_text = match policy {
        PolicyTag::Partial => {
            let clause = if attributes.is_empty() {
                String::new()
            } else {
                format!("; they describe it as {}", attributes.join(", "))
            };
            vars.insert("attribute_clause".into(), clause);
            catalog.render_key("propagation.partial", &vars)?
        }
        PolicyTag::Full => {
            let attr_text = if dossier.attributes.is_empty() {
                "none reported".to_string()
            } else {
                AttributeKind::ALL
                    .iter()
                    .filter_map(|k| dossier.attributes.get(k).map(|v| format!("{} {}", k.as_str(), v)))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            let relations = if dossier.relations.is_empty() {
                "none reported".to_string()
            } else {
                dossier
                    .relations
                    .iter()
                    .map(|r| format!("{} {}", r.predicate, r.other_object))
                    .collect::<Vec<_>>()
                    .join("; ")
            };
            vars.insert("stance".into(), stance.value.to_string());
            vars.insert("rationale".into(), stance.rationale.trim().to_string());
            vars.insert("attributes".into(), attr_text);
            vars.insert(
                "region".into(),
                dossier.region.map(|r| r.to_string()).unwrap_or_else(|| "not reported".into()),
            );
            vars.insert("relations".into(), relations);
            catalog.render_key("propagation.full", &vars)?
        }
    };
    Ok(PropagatedMessage {
        source_role: source,
        policy,
        included_fields: policy.fields(),
        rendered_text,
    })
}

fn own_answers(prior_own_turns: &[Turn]) -> String {
    if prior_own_turns.is_empty() {
        return "(none)".to_string();
    }
    prior_own_turns
        .iter()
        .map(|t| format!("- {}", t.response_text.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Prompt fragment asking the original debater to reconsider given the
/// other side's full argument.
pub fn render_round3_feedback(full_message: &PropagatedMessage, prior_own_turns: &[Turn]) -> Result<String, PropagationError> {
    render_round3_feedback_with(Catalog::builtin(), full_message, prior_own_turns)
}

pub fn render_round3_feedback_with(
    catalog: &Catalog,
    full_message: &PropagatedMessage,
    prior_own_turns: &[Turn],
) -> Result<String, PropagationError> {
    if full_message.policy != PolicyTag::Full {
        return Err(PropagationError::NotFull(full_message.policy));
    }
    let mut vars = BTreeMap::new();
    vars.insert("message".to_string(), full_message.rendered_text.clone());
    vars.insert("own_answers".to_string(), own_answers(prior_own_turns));
    Ok(catalog.render_key("propagation.round3", &vars)?)
}
