use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::inquiry::{InquiryQuestion, ObjectDossier};
use crate::interpret::CauseLabel;
use crate::propagation::PolicyTag;

use super::ValidationError;

/// Binary gold label or verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn as_str(self) -> &'static str {
        match self {
            Answer::Yes => "yes",
            Answer::No => "no",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" => Some(Answer::Yes),
            "no" => Some(Answer::No),
            _ => None,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Answer::Yes => "Yes",
            Answer::No => "No",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StanceValue {
    Yes,
    No,
    Unsure,
}

impl StanceValue {
    pub fn decided(self) -> Option<Answer> {
        match self {
            StanceValue::Yes => Some(Answer::Yes),
            StanceValue::No => Some(Answer::No),
            StanceValue::Unsure => None,
        }
    }
}

impl From<Answer> for StanceValue {
    fn from(a: Answer) -> Self {
        match a {
            Answer::Yes => StanceValue::Yes,
            Answer::No => StanceValue::No,
        }
    }
}

impl fmt::Display for StanceValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StanceValue::Yes => "Yes",
            StanceValue::No => "No",
            StanceValue::Unsure => "Unsure",
        })
    }
}

/// A parsed position plus the verbatim model text it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stance {
    pub value: StanceValue,
    pub rationale: String,
}

impl Stance {
    pub fn new(value: StanceValue, rationale: impl Into<String>) -> Self {
        Self {
            value,
            rationale: rationale.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    DebaterA,
    DebaterB,
    Judge,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::DebaterA, Role::DebaterB, Role::Judge];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::DebaterA => "debater_a",
            Role::DebaterB => "debater_b",
            Role::Judge => "judge",
        }
    }

    pub fn is_debater(self) -> bool {
        !matches!(self, Role::Judge)
    }

    /// The opposing debater. The judge has no opponent and maps to itself.
    pub fn opponent(self) -> Role {
        match self {
            Role::DebaterA => Role::DebaterB,
            Role::DebaterB => Role::DebaterA,
            Role::Judge => Role::Judge,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Role::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    IndependentAsk,
    InquiryQuestion,
    /// Stance restated by a single agent after reviewing its own answers.
    InquiryAnswer,
    HintedAsk,
    FullFeedbackAsk,
    JudgeAsk,
    AnswerFreeText,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::IndependentAsk => "independent_ask",
            MessageKind::InquiryQuestion => "inquiry_question",
            MessageKind::InquiryAnswer => "inquiry_answer",
            MessageKind::HintedAsk => "hinted_ask",
            MessageKind::FullFeedbackAsk => "full_feedback_ask",
            MessageKind::JudgeAsk => "judge_ask",
            MessageKind::AnswerFreeText => "answer_free_text",
        }
    }

    /// Whether a turn of this kind must carry a parsed stance.
    pub fn bears_stance(self) -> bool {
        !matches!(
            self,
            MessageKind::InquiryQuestion | MessageKind::AnswerFreeText
        )
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Random,
    Popular,
    Adversarial,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Random, Split::Popular, Split::Adversarial];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Random => "random",
            Split::Popular => "popular",
            Split::Adversarial => "adversarial",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetTag {
    #[serde(rename = "POPE")]
    Pope,
    #[serde(rename = "POPE-R")]
    PopeR,
    #[serde(rename = "POPE-C")]
    PopeC,
}

impl DatasetTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetTag::Pope => "POPE",
            DatasetTag::PopeR => "POPE-R",
            DatasetTag::PopeC => "POPE-C",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "POPE" => Some(DatasetTag::Pope),
            "POPE-R" => Some(DatasetTag::PopeR),
            "POPE-C" => Some(DatasetTag::PopeC),
            _ => None,
        }
    }
}

/// One polling question about a single object in a single image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeItem {
    pub id: String,
    pub image_ref: String,
    pub object_name: String,
    pub question_text: String,
    pub gold_label: Answer,
    pub split: Split,
    pub dataset_tag: DatasetTag,
}

impl ProbeItem {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.id.trim().is_empty() {
            return Err(ValidationError::EmptyField("id"));
        }
        if self.object_name.trim().is_empty() {
            return Err(ValidationError::EmptyField("object_name"));
        }
        if self.question_text.trim().is_empty() {
            return Err(ValidationError::EmptyField("question_text"));
        }
        if !self.question_text.contains(&self.object_name) {
            return Err(ValidationError::ObjectNotInQuestion {
                object: self.object_name.clone(),
                question: self.question_text.clone(),
            });
        }
        if self.dataset_tag == DatasetTag::PopeC && self.gold_label != Answer::Yes {
            return Err(ValidationError::CreativeLabelNotYes(self.id.clone()));
        }
        Ok(())
    }

    /// "a" or "an" for the object name.
    pub fn article(&self) -> &'static str {
        indefinite_article(&self.object_name)
    }
}

pub fn indefinite_article(word: &str) -> &'static str {
    match word.trim().chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Sro,
    Mad,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Sro => "sro",
            Mode::Mad => "mad",
        }
    }

    /// Name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Mode::Baseline => "Baseline",
            Mode::Sro => "SRO",
            Mode::Mad => "MAD",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Some(Mode::Baseline),
            "sro" => Some(Mode::Sro),
            "mad" => Some(Mode::Mad),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f32,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingConfig {
    pub debater: Decoding,
    pub judge: Decoding,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self {
            debater: Decoding {
                temperature: 0.2,
                max_tokens: 512,
            },
            judge: Decoding {
                temperature: 0.0,
                max_tokens: 512,
            },
        }
    }
}

impl DecodingConfig {
    pub fn for_role(&self, role: Role) -> Decoding {
        match role {
            Role::Judge => self.judge,
            _ => self.debater,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DebateConfig {
    /// Number of debate rounds after the independent poll (Round 0).
    pub max_debate_rounds: u32,
    pub propagation_policy_round2: PolicyTag,
    pub propagation_policy_round3: PolicyTag,
    pub mode: Mode,
    pub persona_set: String,
    pub exemplar_enabled: bool,
    pub decoding: DecodingConfig,
}

impl Default for DebateConfig {
    fn default() -> Self {
        Self {
            max_debate_rounds: 3,
            propagation_policy_round2: PolicyTag::Partial,
            propagation_policy_round3: PolicyTag::Full,
            mode: Mode::Mad,
            persona_set: "default".to_string(),
            exemplar_enabled: true,
            decoding: DecodingConfig::default(),
        }
    }
}

impl DebateConfig {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.max_debate_rounds < 1 {
            return Err(ValidationError::Config(
                "max_debate_rounds must be at least 1".into(),
            ));
        }
        for (name, d) in [("debater", self.decoding.debater), ("judge", self.decoding.judge)] {
            if !(0.0..=2.0).contains(&d.temperature) {
                return Err(ValidationError::Config(format!(
                    "decoding.{name}.temperature must be within [0, 2]"
                )));
            }
            if d.max_tokens == 0 {
                return Err(ValidationError::Config(format!(
                    "decoding.{name}.max_tokens must be positive"
                )));
            }
        }
        Ok(())
    }

    pub fn policy_for_round(&self, round: u32) -> PolicyTag {
        if round <= 2 {
            self.propagation_policy_round2
        } else {
            self.propagation_policy_round3
        }
    }
}

/// The first answer given to a stance-bearing prompt when it had to be asked again.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReAsk {
    pub prompt_text: String,
    pub first_response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub round: u32,
    pub message_kind: MessageKind,
    pub prompt_text: String,
    pub response_text: String,
    pub parsed_stance: Option<Stance>,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reask: Option<ReAsk>,
}

impl Turn {
    /// Same turn with its wall-clock field zeroed, for timestamp-insensitive comparisons.
    pub fn without_timestamp(&self) -> Turn {
        Turn {
            timestamp: DateTime::<Utc>::UNIX_EPOCH,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Round0,
    Round1Inquiry,
    Round2Hint,
    Round3Feedback,
    JudgeStage,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateOutcome {
    pub verdict: Answer,
    pub agreed_at_round: Option<u32>,
    pub judge_used: bool,
    pub flipped_roles: BTreeSet<Role>,
    pub transcript: Vec<Turn>,
    pub cause: Option<CauseLabel>,
}

impl DebateOutcome {
    /// Distinct roles that spoke in the transcript.
    pub fn speakers(&self) -> BTreeSet<Role> {
        self.transcript.iter().map(|t| t.role).collect()
    }

    pub fn without_timestamps(&self) -> DebateOutcome {
        DebateOutcome {
            transcript: self.transcript.iter().map(Turn::without_timestamp).collect(),
            ..self.clone()
        }
    }
}

/// How the pending prompt should be built; carried by every ask action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionContext {
    /// The bare probe question.
    Question,
    Inquiry {
        index: usize,
        question: InquiryQuestion,
    },
    /// Forward the `source` debater's claims to the asked debater.
    Propagate { source: Role, policy: PolicyTag },
    /// Single-agent re-evaluation over its own dossier.
    Reevaluate { dossier: ObjectDossier },
    /// Single-agent second look after denying the object.
    Recheck,
    Judge { answers: Vec<JudgeEvidence> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeEvidence {
    pub role: Role,
    pub round: u32,
    pub message_kind: MessageKind,
    pub response_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPayload {
    /// Catalog phase key, resolved against the asked role (e.g. `round0`, `inquiry_color`).
    pub template_id: String,
    pub message_kind: MessageKind,
    pub round: u32,
    pub context: ActionContext,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    AskBoth,
    AskOne,
    Summarize,
    InvokeJudge,
    Halt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtocolAction {
    /// Pose the same independent question to both debaters; neither sees the other.
    AskBoth { payload: ActionPayload },
    AskOne { target: Role, payload: ActionPayload },
    /// Summarize `source`'s claims under the payload's policy and ask `target` with them.
    Summarize {
        source: Role,
        target: Role,
        payload: ActionPayload,
    },
    InvokeJudge { payload: ActionPayload },
    Halt { verdict: Answer },
}

impl ProtocolAction {
    pub fn kind(&self) -> ActionKind {
        match self {
            ProtocolAction::AskBoth { .. } => ActionKind::AskBoth,
            ProtocolAction::AskOne { .. } => ActionKind::AskOne,
            ProtocolAction::Summarize { .. } => ActionKind::Summarize,
            ProtocolAction::InvokeJudge { .. } => ActionKind::InvokeJudge,
            ProtocolAction::Halt { .. } => ActionKind::Halt,
        }
    }

    pub fn target(&self) -> Option<Role> {
        match self {
            ProtocolAction::AskOne { target, .. } | ProtocolAction::Summarize { target, .. } => {
                Some(*target)
            }
            ProtocolAction::InvokeJudge { .. } => Some(Role::Judge),
            _ => None,
        }
    }

    pub fn payload(&self) -> Option<&ActionPayload> {
        match self {
            ProtocolAction::AskBoth { payload }
            | ProtocolAction::AskOne { payload, .. }
            | ProtocolAction::Summarize { payload, .. }
            | ProtocolAction::InvokeJudge { payload } => Some(payload),
            ProtocolAction::Halt { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Agreement {
    Agreed(Answer),
    Disagreed,
    Pending,
}

/// How a debate ended, once it has.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub verdict: Answer,
    pub agreed_at_round: Option<u32>,
}

/// Immutable snapshot of one debate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateState {
    pub item: ProbeItem,
    pub config: DebateConfig,
    pub turns: Vec<Turn>,
    pub phase: Phase,
    /// Current debate round; 0 during the independent poll.
    pub round: u32,
    pub stance_a: Option<Stance>,
    pub stance_b: Option<Stance>,
    pub dossiers: BTreeMap<Role, ObjectDossier>,
    /// The debater questioned in Round 1.
    pub first_debater: Option<Role>,
    pub resolution: Option<Resolution>,
    pub outcome: Option<DebateOutcome>,
}

impl DebateState {
    pub fn stance_of(&self, role: Role) -> Option<&Stance> {
        match role {
            Role::DebaterA => self.stance_a.as_ref(),
            Role::DebaterB => self.stance_b.as_ref(),
            Role::Judge => None,
        }
    }

    /// Stance a debater gave in Round 0.
    pub fn initial_stance(&self, role: Role) -> Option<&Stance> {
        self.turns
            .iter()
            .find(|t| t.role == role && t.round == 0 && t.message_kind.bears_stance())
            .and_then(|t| t.parsed_stance.as_ref())
    }

    /// The most recent stance-bearing turn of `role`.
    pub fn latest_stance_turn(&self, role: Role) -> Option<&Turn> {
        self.turns
            .iter()
            .rev()
            .find(|t| t.role == role && t.message_kind.bears_stance() && t.parsed_stance.is_some())
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }
}
