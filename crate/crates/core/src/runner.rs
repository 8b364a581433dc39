//! Drives a debate: executes each protocol action against the gateway and
//! feeds the recorded turns back into the state machine.

use std::collections::{BTreeMap, HashMap};
use std::io;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::gateway::{parse_stance, Conversation, Gateway, GatewayError};
use crate::inquiry::ObjectDossier;
use crate::persona::{
    render_prompt_with, select_exemplar, Catalog, DebateExemplar, ExemplarStore, Persona, PersonaSet, PromptContext,
    RenderedPrompt, ScenarioTable, ScenarioTag, TemplateError,
};
use crate::propagation::{filter_dossier_with, render_round3_feedback_with, PolicyTag, PropagationError};
use crate::protocol::{
    apply_turn, finalize, new_debate, ActionContext, ActionPayload, DebateConfig, DebateOutcome, DebateState,
    JudgeEvidence, MessageKind, Mode, ProbeItem, ProtocolAction, ProtocolError, ReAsk, Role, Stance, StanceValue,
    Turn,
};

pub const DESCRIBE_TEMPLATE: &str = "describe";
pub const DEFAULT_PROMPT_CHAR_BUDGET: usize = 12_000;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("{role}: {source}")]
    Gateway {
        role: Role,
        #[source]
        source: GatewayError,
    },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error("writing transcript: {0}")]
    Sink(#[from] io::Error),
}

/// Backend id serving each role. Single-agent modes use `debater_a`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentAssignment {
    pub debater_a: String,
    pub debater_b: String,
    pub judge: String,
}

impl AgentAssignment {
    pub fn all(backend_id: &str) -> Self {
        Self {
            debater_a: backend_id.to_string(),
            debater_b: backend_id.to_string(),
            judge: backend_id.to_string(),
        }
    }

    pub fn backend_for(&self, role: Role) -> &str {
        match role {
            Role::DebaterA => &self.debater_a,
            Role::DebaterB => &self.debater_b,
            Role::Judge => &self.judge,
        }
    }
}

pub struct Engine {
    pub gateway: Arc<Gateway>,
    pub catalog: Catalog,
    pub personas: PersonaSet,
    pub exemplars: Option<ExemplarStore>,
    pub scenarios: ScenarioTable,
    pub agents: AgentAssignment,
    pub clock: Arc<dyn Clock>,
    pub prompt_char_budget: Option<usize>,
    scenario_cache: Mutex<HashMap<String, ScenarioTag>>,
}

impl Engine {
    pub fn new(gateway: Arc<Gateway>, agents: AgentAssignment) -> Self {
        Self {
            gateway,
            catalog: Catalog::builtin().clone(),
            personas: PersonaSet::builtin("default").expect("default persona set"),
            exemplars: Some(ExemplarStore::builtin().clone()),
            scenarios: ScenarioTable::builtin().clone(),
            agents,
            clock: Arc::new(SystemClock),
            prompt_char_budget: Some(DEFAULT_PROMPT_CHAR_BUDGET),
            scenario_cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_catalog(mut self, catalog: Catalog) -> Self {
        self.catalog = catalog;
        self
    }

    pub fn with_personas(mut self, personas: PersonaSet) -> Self {
        self.personas = personas;
        self
    }

    pub fn with_exemplars(mut self, exemplars: Option<ExemplarStore>) -> Self {
        self.exemplars = exemplars;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_char_budget(mut self, budget: Option<usize>) -> Self {
        self.prompt_char_budget = budget;
        self
    }

    /// Persona speaking as `role` under `mode`.
    pub fn persona(&self, mode: Mode, role: Role) -> &Persona {
        match (mode, role) {
            (Mode::Mad, r) | (_, r @ Role::Judge) => self.personas.for_role(r),
            _ => &self.personas.single_agent,
        }
    }

    fn conversation(&self, item: &ProbeItem, config: &DebateConfig, role: Role) -> Conversation {
        Conversation::new(
            role,
            self.agents.backend_for(role),
            &self.persona(config.mode, role).system_prompt,
            config.decoding.for_role(role),
            &item.id,
            Some(&item.image_ref),
        )
    }

    /// Scenario of the item's image, from a one-sentence description asked
    /// once per image. A failed description falls back to `other`.
    pub fn scenario_for(&self, item: &ProbeItem, config: &DebateConfig) -> ScenarioTag {
        if let Some(tag) = self.scenario_cache.lock().unwrap().get(&item.image_ref) {
            return *tag;
        }
        let tag = match self.describe(item, config) {
            Ok(text) => self.scenarios.classify(&text),
            Err(e) => {
                tracing::warn!(item = %item.id, error = %e, "image description failed; using scenario other");
                ScenarioTag::Other
            }
        };
        self.scenario_cache.lock().unwrap().insert(item.image_ref.clone(), tag);
        tag
    }

    fn describe(&self, item: &ProbeItem, config: &DebateConfig) -> Result<String, RunError> {
        let prompt = self.catalog.render(Role::DebaterA, DESCRIBE_TEMPLATE, &BTreeMap::new())?;
        let mut conv = self.conversation(item, config, Role::DebaterA);
        conv.system_prompt.clear();
        let resp = conv
            .ask(&self.gateway, &prompt, 0, MessageKind::AnswerFreeText)
            .map_err(|source| RunError::Gateway {
                role: Role::DebaterA,
                source,
            })?;
        Ok(resp.text)
    }

    fn exemplar_for(&self, item: &ProbeItem, config: &DebateConfig) -> Option<DebateExemplar> {
        if config.mode != Mode::Mad || !config.exemplar_enabled {
            return None;
        }
        let store = self.exemplars.as_ref().filter(|s| !s.is_empty())?;
        let scenario = self.scenario_for(item, config);
        select_exemplar(scenario, Some(store)).cloned()
    }

    /// Prompt for `role` under `payload`, built only from the state.
    pub fn render_action_prompt(
        &self,
        state: &DebateState,
        role: Role,
        payload: &ActionPayload,
        exemplar: Option<&DebateExemplar>,
    ) -> Result<RenderedPrompt, RunError> {
        let item = &state.item;
        let persona = self.persona(state.config.mode, role);
        let mut ctx = PromptContext::new(item, persona);
        ctx.char_budget = self.prompt_char_budget;
        let mut phase = payload.template_id.as_str();
        let hint;
        match &payload.context {
            ActionContext::Question => {
                if payload.message_kind == MessageKind::IndependentAsk && state.config.mode == Mode::Mad {
                    ctx.exemplar = exemplar;
                }
            }
            ActionContext::Inquiry { .. } | ActionContext::Recheck => {}
            ActionContext::Propagate { source, policy } => {
                let message = self.propagated(state, *source, *policy)?;
                if payload.message_kind == MessageKind::FullFeedbackAsk && *policy == PolicyTag::Full {
                    let own: Vec<Turn> = state
                        .turns
                        .iter()
                        .filter(|t| t.role == role && t.message_kind.bears_stance())
                        .cloned()
                        .collect();
                    let feedback = render_round3_feedback_with(&self.catalog, &message, &own)?;
                    ctx.extras.insert("feedback".into(), feedback);
                } else {
                    hint = message.rendered_text;
                    ctx.hint = Some(&hint);
                    phase = "round2";
                }
            }
            ActionContext::Reevaluate { dossier } => {
                ctx.dossier = Some(dossier);
                let initial = state
                    .initial_stance(role)
                    .map(|s| s.rationale.trim().to_string())
                    .unwrap_or_default();
                ctx.extras.insert("initial_answer".into(), initial);
            }
            ActionContext::Judge { answers } => {
                ctx.extras.insert("transcript".into(), judge_transcript(answers));
            }
        }
        Ok(render_prompt_with(&self.catalog, role, phase, &ctx)?)
    }

    fn propagated(
        &self,
        state: &DebateState,
        source: Role,
        policy: PolicyTag,
    ) -> Result<crate::propagation::PropagatedMessage, RunError> {
        let empty = ObjectDossier::empty(&state.item.object_name);
        let dossier = state.dossiers.get(&source).unwrap_or(&empty);
        let stance = state
            .stance_of(source)
            .cloned()
            .unwrap_or_else(|| Stance::new(StanceValue::Unsure, ""));
        Ok(filter_dossier_with(&self.catalog, source, dossier, &stance, policy)?)
    }

    fn ask_turn(
        &self,
        conv: &mut Conversation,
        prompt: &RenderedPrompt,
        payload: &ActionPayload,
    ) -> Result<Turn, RunError> {
        let role = conv.role;
        let kind = payload.message_kind;
        let gw_err = |source| RunError::Gateway { role, source };
        let first = conv.ask(&self.gateway, &prompt.user, payload.round, kind).map_err(gw_err)?;
        let mut text = first.text;
        let mut reask = None;
        let mut stance = kind.bears_stance().then(|| parse_stance(&text));
        if stance.as_ref().is_some_and(|s| s.value == StanceValue::Unsure) {
            let reask_prompt = self.catalog.render(role, "reask", &BTreeMap::new())?;
            let second = conv.ask(&self.gateway, &reask_prompt, payload.round, kind).map_err(gw_err)?;
            reask = Some(ReAsk {
                prompt_text: reask_prompt,
                first_response: std::mem::replace(&mut text, second.text),
            });
            stance = Some(parse_stance(&text));
        }
        Ok(Turn {
            role,
            round: payload.round,
            message_kind: kind,
            prompt_text: prompt.user.clone(),
            response_text: text,
            parsed_stance: stance,
            timestamp: self.clock.now(),
            reask,
        })
    }

    /// Run one item to completion. `sink` sees every turn as soon as it is recorded.
    pub fn run_debate(
        &self,
        item: &ProbeItem,
        config: &DebateConfig,
        sink: &mut dyn FnMut(&Turn) -> io::Result<()>,
    ) -> Result<DebateOutcome, RunError> {
        let mut state = new_debate(item.clone(), config.clone())?;
        let exemplar = self.exemplar_for(item, config);
        let mut conversations: BTreeMap<Role, Conversation> = BTreeMap::new();
        loop {
            let action = crate::protocol::next_action(&state)?;
            let asks: Vec<(Role, ActionPayload)> = match &action {
                ProtocolAction::Halt { .. } => break,
                ProtocolAction::AskBoth { payload } => {
                    vec![(Role::DebaterA, payload.clone()), (Role::DebaterB, payload.clone())]
                }
                ProtocolAction::AskOne { target, payload } | ProtocolAction::Summarize { target, payload, .. } => {
                    vec![(*target, payload.clone())]
                }
                ProtocolAction::InvokeJudge { payload } => vec![(Role::Judge, payload.clone())],
            };
            // every prompt of the action is fixed before any agent answers
            let prompts = asks
                .iter()
                .map(|(role, payload)| self.render_action_prompt(&state, *role, payload, exemplar.as_ref()))
                .collect::<Result<Vec<_>, _>>()?;
            for ((role, payload), prompt) in asks.iter().zip(&prompts) {
                let conv = if *role == Role::Judge {
                    conversations.insert(Role::Judge, self.conversation(item, config, Role::Judge));
                    conversations.get_mut(&Role::Judge).unwrap()
                } else {
                    conversations
                        .entry(*role)
                        .or_insert_with(|| self.conversation(item, config, *role))
                };
                let turn = self.ask_turn(conv, prompt, payload)?;
                sink(&turn)?;
                state = apply_turn(&state, turn)?;
            }
        }
        Ok(finalize(&state, None)?)
    }
}

/// Every answer of the debate, one block per turn, for the judge.
pub fn judge_transcript(answers: &[JudgeEvidence]) -> String {
    answers
        .iter()
        .map(|a| {
            let who = match a.role {
                Role::DebaterA => "Debater A",
                Role::DebaterB => "Debater B",
                Role::Judge => "Judge",
            };
            let what = match a.message_kind {
                MessageKind::InquiryQuestion => "answer to a follow-up question",
                _ => "answer",
            };
            format!("[Round {}] {who}, {what}: {}", a.round, a.response_text)
        })
        .collect::<Vec<_>>()
        .join("\n")
}
