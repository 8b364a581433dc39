//! Continuous inquiry: the attribute / location / relation battery put to the
//! debater that affirms the object, the dossier assembled from its answers,
//! and the single-agent self-reflection run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Conversation, GatewayError, Gateway};
use crate::persona::{Catalog, TemplateError};
use crate::propagation::extract_fields;
use crate::protocol::{DebateConfig, DebateOutcome, MessageKind, Mode, ProbeItem};
use crate::runner::{Engine, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Color,
    Shape,
    Size,
}

impl AttributeKind {
    pub const ALL: [AttributeKind; 3] = [AttributeKind::Color, AttributeKind::Shape, AttributeKind::Size];

    pub fn as_str(self) -> &'static str {
        match self {
            AttributeKind::Color => "color",
            AttributeKind::Shape => "shape",
            AttributeKind::Size => "size",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    Attribute(AttributeKind),
    Location,
    Relation,
}

impl QuestionKind {
    pub fn template_id(self) -> &'static str {
        match self {
            QuestionKind::Attribute(AttributeKind::Color) => "inquiry_color",
            QuestionKind::Attribute(AttributeKind::Shape) => "inquiry_shape",
            QuestionKind::Attribute(AttributeKind::Size) => "inquiry_size",
            QuestionKind::Location => "inquiry_location",
            QuestionKind::Relation => "inquiry_relation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InquiryQuestion {
    pub kind: QuestionKind,
    pub text: String,
}

/// Coarse image region used for location questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionTag {
    #[serde(rename = "center")]
    Center,
    #[serde(rename = "top-left")]
    TopLeft,
    #[serde(rename = "top-right")]
    TopRight,
    #[serde(rename = "bottom-left")]
    BottomLeft,
    #[serde(rename = "bottom-right")]
    BottomRight,
}

impl RegionTag {
    pub const ALL: [RegionTag; 5] = [
        RegionTag::Center,
        RegionTag::TopLeft,
        RegionTag::TopRight,
        RegionTag::BottomLeft,
        RegionTag::BottomRight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RegionTag::Center => "center",
            RegionTag::TopLeft => "top-left",
            RegionTag::TopRight => "top-right",
            RegionTag::BottomLeft => "bottom-left",
            RegionTag::BottomRight => "bottom-right",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        RegionTag::ALL.into_iter().find(|r| r.as_str() == s.trim())
    }
}

impl fmt::Display for RegionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub predicate: String,
    pub other_object: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAnswer {
    pub question: InquiryQuestion,
    pub answer: String,
}

/// What one agent has claimed about the probed object.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ObjectDossier {
    pub object_name: String,
    pub attributes: BTreeMap<AttributeKind, String>,
    pub region: Option<RegionTag>,
    pub relations: Vec<Relation>,
    pub raw_answers: Vec<RawAnswer>,
}

impl ObjectDossier {
    pub fn empty(object_name: &str) -> Self {
        Self {
            object_name: object_name.to_string(),
            ..Self::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty() && self.region.is_none() && self.relations.is_empty()
    }

    pub fn answered_kinds(&self) -> BTreeSet<QuestionKind> {
        self.raw_answers.iter().map(|r| r.question.kind).collect()
    }

    /// Multi-line listing of every populated field.
    pub fn summary(&self) -> String {
        let mut lines = Vec::new();
        for kind in AttributeKind::ALL {
            if let Some(v) = self.attributes.get(&kind) {
                lines.push(format!("- {}: {}", kind.as_str(), v));
            }
        }
        if let Some(r) = self.region {
            lines.push(format!("- location: {r}"));
        }
        for rel in &self.relations {
            lines.push(format!("- {} {}", rel.predicate, rel.other_object));
        }
        if lines.is_empty() {
            "- (no details reported)".to_string()
        } else {
            lines.join("\n")
        }
    }
}

#[derive(Debug, Error)]
pub enum InquiryError {
    #[error("object name must not be empty")]
    EmptyObject,
    #[error("coordinates ({0}, {1}) fall outside the unit square")]
    OutOfRange(f64, f64),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Battery is failing mid-way; the dossier holds everything answered so far.
#[derive(Debug, Error)]
#[error("inquiry interrupted after {} answers: {source}", partial.raw_answers.len())]
pub struct BatteryError {
    pub partial: ObjectDossier,
    #[source]
    pub source: GatewayError,
}

const BATTERY_ORDER: [QuestionKind; 5] = [
    QuestionKind::Attribute(AttributeKind::Color),
    QuestionKind::Attribute(AttributeKind::Shape),
    QuestionKind::Attribute(AttributeKind::Size),
    QuestionKind::Location,
    QuestionKind::Relation,
];

/// The fixed five-question battery (color, shape, size, location, relation)
/// worded by the built-in catalog.
pub fn build_battery(object_name: &str) -> Result<Vec<InquiryQuestion>, InquiryError> {
    build_battery_with(Catalog::builtin(), object_name)
}

pub fn build_battery_with(catalog: &Catalog, object_name: &str) -> Result<Vec<InquiryQuestion>, InquiryError> {
    let object = object_name.trim();
    if object.is_empty() {
        return Err(InquiryError::EmptyObject);
    }
    let vars = catalog.object_vars(object);
    BATTERY_ORDER
        .into_iter()
        .map(|kind| {
            let text = catalog.render_key(&format!("debater.{}", kind.template_id()), &vars)?;
            Ok(InquiryQuestion { kind, text })
        })
        .collect()
}

const CENTER_HALF_WIDTH: f64 = 1.0 / 6.0;

/// Region of a normalized point (origin top-left). The central third box is
/// `center`; elsewhere the quadrant decides, with exact 0.5 resolving to top/left.
pub fn region_of(cx: f64, cy: f64) -> Result<RegionTag, InquiryError> {
    if !(0.0..=1.0).contains(&cx) || !(0.0..=1.0).contains(&cy) {
        return Err(InquiryError::OutOfRange(cx, cy));
    }
    if (cx - 0.5).abs() <= CENTER_HALF_WIDTH && (cy - 0.5).abs() <= CENTER_HALF_WIDTH {
        return Ok(RegionTag::Center);
    }
    Ok(match (cx <= 0.5, cy <= 0.5) {
        (true, true) => RegionTag::TopLeft,
        (false, true) => RegionTag::TopRight,
        (true, false) => RegionTag::BottomLeft,
        (false, false) => RegionTag::BottomRight,
    })
}

/// Ask every battery question in one conversation and assemble the dossier.
/// Questions whose kind was already answered are skipped.
pub fn run_battery(
    gateway: &Gateway,
    agent: &mut Conversation,
    item: &ProbeItem,
    battery: &[InquiryQuestion],
) -> Result<ObjectDossier, BatteryError> {
    let mut raw: Vec<(InquiryQuestion, String)> = Vec::new();
    let mut asked = BTreeSet::new();
    for question in battery {
        if !asked.insert(question.kind) {
            continue;
        }
        match agent.ask(gateway, &question.text, 1, MessageKind::InquiryQuestion) {
            Ok(resp) => raw.push((question.clone(), resp.text)),
            Err(source) => {
                let mut partial = extract_fields(&raw);
                partial.object_name = item.object_name.clone();
                return Err(BatteryError { partial, source });
            }
        }
    }
    let mut dossier = extract_fields(&raw);
    dossier.object_name = item.object_name.clone();
    Ok(dossier)
}

/// Self-reflection only: one agent answers, questions itself, and re-evaluates.
pub fn run_sro(item: &ProbeItem, engine: &Engine, config: &DebateConfig) -> Result<DebateOutcome, RunError> {
    let mut cfg = config.clone();
    cfg.mode = Mode::Sro;
    engine.run_debate(item, &cfg, &mut |_| Ok(()))
}
