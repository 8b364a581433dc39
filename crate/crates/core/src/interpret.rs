//! Post-hoc classification of hallucinations into cause categories.

use std::collections::BTreeMap;
use std::fmt;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::gateway::Conversation;
use crate::protocol::{DatasetTag, DebateOutcome, MessageKind, ProbeItem, Role, Turn};
use crate::runner::Engine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CauseCategory {
    LimitedPerception,
    VisualSimilarity,
    ConceptualSimilarity,
    QuestionMisunderstanding,
    ExcessiveInference,
    Unclassified,
}

impl CauseCategory {
    pub const ALL: [CauseCategory; 6] = [
        CauseCategory::LimitedPerception,
        CauseCategory::VisualSimilarity,
        CauseCategory::ConceptualSimilarity,
        CauseCategory::QuestionMisunderstanding,
        CauseCategory::ExcessiveInference,
        CauseCategory::Unclassified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CauseCategory::LimitedPerception => "limited_perception",
            CauseCategory::VisualSimilarity => "visual_similarity",
            CauseCategory::ConceptualSimilarity => "conceptual_similarity",
            CauseCategory::QuestionMisunderstanding => "question_misunderstanding",
            CauseCategory::ExcessiveInference => "excessive_inference",
            CauseCategory::Unclassified => "unclassified",
        }
    }
}

impl fmt::Display for CauseCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CauseLabel {
    pub value: CauseCategory,
    /// Quoted transcript text supporting the category.
    pub evidence: String,
    pub confused_with: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CauseLabel {
    pub fn unclassified() -> Self {
        Self {
            value: CauseCategory::Unclassified,
            evidence: String::new(),
            confused_with: None,
            note: None,
        }
    }

    fn unclassified_because(note: impl Into<String>) -> Self {
        Self {
            note: Some(note.into()),
            ..Self::unclassified()
        }
    }
}

static CATEGORY: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"(?i)\b(limited_perception|visual_similarity|conceptual_similarity|question_misunderstanding|excessive_inference|unclassified)\b",
    )
    .unwrap()
});
static ACTUAL: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?im)^\s*actual object\s*:\s*(.*?)\s*$").unwrap());
static EVIDENCE: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?im)^\s*evidence\s*:\s*(.*?)\s*$").unwrap());

/// Earliest category token in `text`; none when no token occurs.
pub fn parse_category(text: &str) -> Option<CauseCategory> {
    let token = CATEGORY.find(text)?.as_str().to_ascii_lowercase();
    CauseCategory::ALL.into_iter().find(|c| c.as_str() == token)
}

fn field(re: &Regex, text: &str) -> Option<String> {
    re.captures(text)
        .and_then(|c| c.get(1))
        .map(|m| m.as_str().trim_matches(|c: char| c == '"' || c.is_whitespace()).to_string())
        .filter(|s| !s.is_empty())
}

/// Parse a classifier reply of the `Category:` / `Actual object:` / `Evidence:` form.
pub fn parse_cause_reply(reply: &str, outcome: &DebateOutcome, gold: crate::protocol::Answer) -> CauseLabel {
    let Some(value) = parse_category(reply) else {
        return CauseLabel::unclassified_because("reply named no category");
    };
    let confused_with = field(&ACTUAL, reply).filter(|s| {
        let l = s.to_ascii_lowercase();
        !matches!(l.trim_end_matches('.'), "none" | "n/a" | "unknown")
    });
    let evidence = if value == CauseCategory::Unclassified {
        field(&EVIDENCE, reply).unwrap_or_default()
    } else {
        field(&EVIDENCE, reply)
            .or_else(|| fallback_evidence(&outcome.transcript, gold))
            .unwrap_or_else(|| "(empty transcript)".to_string())
    };
    CauseLabel {
        value,
        evidence,
        confused_with,
        note: None,
    }
}

/// First answer that contradicted the gold label, else the last answer.
fn fallback_evidence(transcript: &[Turn], gold: crate::protocol::Answer) -> Option<String> {
    let wrong = transcript.iter().find(|t| {
        t.parsed_stance
            .as_ref()
            .and_then(|s| s.value.decided())
            .is_some_and(|v| v != gold)
    });
    wrong
        .or_else(|| transcript.last())
        .map(|t| t.response_text.trim().chars().take(300).collect::<String>())
        .filter(|s| !s.is_empty())
}

fn transcript_text(transcript: &[Turn]) -> String {
    transcript
        .iter()
        .map(|t| format!("[{} round {}] {}", t.role, t.round, t.response_text.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Whether an outcome is worth classifying: somebody changed their mind or the verdict is wrong.
pub fn needs_classification(item: &ProbeItem, outcome: &DebateOutcome) -> bool {
    item.dataset_tag != DatasetTag::PopeC && (!outcome.flipped_roles.is_empty() || outcome.verdict != item.gold_label)
}

/// One judge-role call over the transcript. Never changes the outcome.
pub fn classify_cause(engine: &Engine, item: &ProbeItem, outcome: &DebateOutcome) -> CauseLabel {
    if !needs_classification(item, outcome) {
        return CauseLabel::unclassified();
    }
    let mut vars = engine.catalog.object_vars(&item.object_name);
    vars.insert("question".into(), item.question_text.clone());
    vars.insert("gold".into(), item.gold_label.to_string());
    vars.insert("verdict".into(), outcome.verdict.to_string());
    vars.insert("transcript".into(), transcript_text(&outcome.transcript));
    let prompt = match engine.catalog.render(Role::Judge, "cause", &vars) {
        Ok(p) => p,
        Err(e) => return CauseLabel::unclassified_because(e.to_string()),
    };
    let mut conv = Conversation::new(
        Role::Judge,
        engine.agents.backend_for(Role::Judge),
        &engine.personas.judge.system_prompt,
        crate::protocol::DecodingConfig::default().judge,
        &item.id,
        Some(&item.image_ref),
    );
    let round = outcome.transcript.last().map(|t| t.round).unwrap_or(0);
    match conv.ask(&engine.gateway, &prompt, round, MessageKind::AnswerFreeText) {
        Ok(resp) => parse_cause_reply(&resp.text, outcome, item.gold_label),
        Err(e) => CauseLabel::unclassified_because(format!("classifier call failed: {e}")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub item_id: String,
    pub cause: CauseCategory,
    pub confused_with: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseReport {
    pub total: usize,
    pub counts: BTreeMap<CauseCategory, usize>,
    pub percentages: BTreeMap<CauseCategory, f64>,
    pub all_unclassified: bool,
    pub audit: Vec<AuditEntry>,
}

pub fn cause_report(labels: &[(String, CauseLabel)]) -> CauseReport {
    let mut counts: BTreeMap<CauseCategory, usize> = BTreeMap::new();
    for (_, label) in labels {
        *counts.entry(label.value).or_default() += 1;
    }
    let total = labels.len();
    let percentages = counts
        .iter()
        .map(|(k, &n)| (*k, 100.0 * n as f64 / total as f64))
        .collect();
    CauseReport {
        total,
        all_unclassified: total > 0 && counts.get(&CauseCategory::Unclassified) == Some(&total),
        counts,
        percentages,
        audit: labels
            .iter()
            .map(|(id, l)| AuditEntry {
                item_id: id.clone(),
                cause: l.value,
                confused_with: l.confused_with.clone(),
            })
            .collect(),
    }
}

impl CauseReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<28}{:>8}{:>10}\n", "Cause", "Count", "Share");
        for c in CauseCategory::ALL {
            let n = self.counts.get(&c).copied().unwrap_or(0);
            let pct = self
                .percentages
                .get(&c)
                .map(|p| format!("{p:.2}"))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!("{:<28}{:>8}{:>10}\n", c.as_str(), n, pct));
        }
        out.push_str(&format!("{:<28}{:>8}\n", "total", self.total));
        if self.all_unclassified {
            out.push_str("note: every label is unclassified\n");
        }
        out
    }
}
