//! The debate workflow as a pure state machine.
//!
//! Round 0 polls both debaters independently. If they already agree the debate
//! stops. Otherwise the affirmative debater is questioned about the object
//! (Round 1), a partial summary of its claims is put to the other debater
//! (Round 2), and the other debater's full answer is returned to the first
//! (Round 3, and alternating rounds after that). A judge decides when the
//! debaters still disagree after `max_debate_rounds`.
//!
//! `next_action` and `apply_turn` never perform I/O; the runner executes the
//! actions and feeds the recorded turns back in.

mod types;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::inquiry::{build_battery, InquiryQuestion, ObjectDossier};
use crate::propagation::extract_fields;

pub use types::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("field `{0}` must not be empty")]
    EmptyField(&'static str),
    #[error("question {question:?} does not mention the object {object:?}")]
    ObjectNotInQuestion { object: String, question: String },
    #[error("POPE-C item {0} must carry the creative gold label Yes")]
    CreativeLabelNotYes(String),
    #[error("invalid debate config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("debate already finished")]
    Finished,
    #[error("debate is resolved (verdict {0}); finalize it instead of adding turns")]
    Resolved(Answer),
    #[error("unexpected turn: expected {expected}, got {got}")]
    UnexpectedTurn { expected: String, got: String },
    #[error("{role} turn of kind {kind} requires a parsed stance")]
    MissingStance { role: Role, kind: MessageKind },
    #[error("judge did not answer Yes or No")]
    JudgeUndecided,
    #[error("{0} gave no Yes/No answer for the final verdict")]
    UndecidedFinalStance(Role),
    #[error("debate cannot be finalized: {0}")]
    NotFinalizable(&'static str),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

pub fn new_debate(item: ProbeItem, config: DebateConfig) -> Result<DebateState, ProtocolError> {
    item.validate()?;
    config.validate()?;
    Ok(DebateState {
        item,
        config,
        turns: Vec::new(),
        phase: Phase::Round0,
        round: 0,
        stance_a: None,
        stance_b: None,
        dossiers: Default::default(),
        first_debater: None,
        resolution: None,
        outcome: None,
    })
}

/// Agreed iff both current stances are present, equal, and not Unsure.
pub fn agreement(state: &DebateState) -> Agreement {
    match (&state.stance_a, &state.stance_b) {
        (Some(a), Some(b)) => match (a.value.decided(), b.value.decided()) {
            (Some(x), Some(y)) if x == y => Agreement::Agreed(x),
            _ => Agreement::Disagreed,
        },
        _ => Agreement::Pending,
    }
}

/// Round-1 target: the affirmative debater, else the unsure one, A on ties.
pub fn choose_first_debater(a: StanceValue, b: StanceValue) -> Role {
    let rank = |v: StanceValue| match v {
        StanceValue::Yes => 0,
        StanceValue::Unsure => 1,
        StanceValue::No => 2,
    };
    if rank(b) < rank(a) {
        Role::DebaterB
    } else {
        Role::DebaterA
    }
}

fn payload(template_id: &str, kind: MessageKind, round: u32, context: ActionContext) -> ActionPayload {
    ActionPayload {
        template_id: template_id.to_string(),
        message_kind: kind,
        round,
        context,
    }
}

fn inquiry_turns(state: &DebateState) -> impl Iterator<Item = &Turn> {
    state
        .turns
        .iter()
        .filter(|t| t.message_kind == MessageKind::InquiryQuestion)
}

fn battery_for(state: &DebateState) -> Vec<InquiryQuestion> {
    build_battery(&state.item.object_name).unwrap_or_default()
}

fn inquiry_action(state: &DebateState, target: Role) -> Option<ProtocolAction> {
    let battery = battery_for(state);
    let asked = inquiry_turns(state).count();
    battery.get(asked).map(|q| ProtocolAction::AskOne {
        target,
        payload: payload(
            q.kind.template_id(),
            MessageKind::InquiryQuestion,
            1,
            ActionContext::Inquiry {
                index: asked,
                question: q.clone(),
            },
        ),
    })
}

/// Target of a feedback round: the first debater on odd rounds, the other on even ones.
fn feedback_target(first: Role, round: u32) -> Role {
    if round % 2 == 1 {
        first
    } else {
        first.opponent()
    }
}

pub fn next_action(state: &DebateState) -> Result<ProtocolAction, ProtocolError> {
    if state.phase == Phase::Done {
        return Err(ProtocolError::Finished);
    }
    if let Some(res) = state.resolution {
        return Ok(ProtocolAction::Halt {
            verdict: res.verdict,
        });
    }
    match state.config.mode {
        Mode::Baseline => Ok(ProtocolAction::AskOne {
            target: Role::DebaterA,
            payload: payload("baseline", MessageKind::IndependentAsk, 0, ActionContext::Question),
        }),
        Mode::Sro => next_sro_action(state),
        Mode::Mad => next_mad_action(state),
    }
}

fn next_sro_action(state: &DebateState) -> Result<ProtocolAction, ProtocolError> {
    let agent = Role::DebaterA;
    match state.phase {
        Phase::Round0 => Ok(ProtocolAction::AskOne {
            target: agent,
            payload: payload("baseline", MessageKind::IndependentAsk, 0, ActionContext::Question),
        }),
        Phase::Round1Inquiry => {
            let affirmed = state
                .initial_stance(agent)
                .map(|s| s.value == StanceValue::Yes)
                .unwrap_or(false);
            if !affirmed {
                return Ok(ProtocolAction::AskOne {
                    target: agent,
                    payload: payload("sro_recheck", MessageKind::InquiryAnswer, 1, ActionContext::Recheck),
                });
            }
            if let Some(action) = inquiry_action(state, agent) {
                return Ok(action);
            }
            let dossier = state
                .dossiers
                .get(&agent)
                .cloned()
                .unwrap_or_else(|| ObjectDossier::empty(&state.item.object_name));
            Ok(ProtocolAction::AskOne {
                target: agent,
                payload: payload(
                    "sro_reevaluate",
                    MessageKind::InquiryAnswer,
                    1,
                    ActionContext::Reevaluate { dossier },
                ),
            })
        }
        _ => Err(ProtocolError::NotFinalizable("single-agent run left its phases")),
    }
}

fn next_mad_action(state: &DebateState) -> Result<ProtocolAction, ProtocolError> {
    let cfg = &state.config;
    match state.phase {
        Phase::Round0 => {
            let question = || payload("round0", MessageKind::IndependentAsk, 0, ActionContext::Question);
            match (state.stance_a.is_some(), state.stance_b.is_some()) {
                (false, false) => Ok(ProtocolAction::AskBoth { payload: question() }),
                (false, true) => Ok(ProtocolAction::AskOne {
                    target: Role::DebaterA,
                    payload: question(),
                }),
                (true, false) => Ok(ProtocolAction::AskOne {
                    target: Role::DebaterB,
                    payload: question(),
                }),
                (true, true) => Err(ProtocolError::NotFinalizable("round 0 finished without transition")),
            }
        }
        Phase::Round1Inquiry => {
            let first = state.first_debater.unwrap_or(Role::DebaterA);
            inquiry_action(state, first)
                .ok_or(ProtocolError::NotFinalizable("inquiry battery exhausted without transition"))
        }
        Phase::Round2Hint => {
            let first = state.first_debater.unwrap_or(Role::DebaterA);
            let policy = cfg.policy_for_round(2);
            Ok(ProtocolAction::Summarize {
                source: first,
                target: first.opponent(),
                payload: payload(
                    "round2",
                    MessageKind::HintedAsk,
                    2,
                    ActionContext::Propagate {
                        source: first,
                        policy,
                    },
                ),
            })
        }
        Phase::Round3Feedback => {
            let first = state.first_debater.unwrap_or(Role::DebaterA);
            let target = feedback_target(first, state.round);
            Ok(ProtocolAction::AskOne {
                target,
                payload: payload(
                    "round3",
                    MessageKind::FullFeedbackAsk,
                    state.round,
                    ActionContext::Propagate {
                        source: target.opponent(),
                        policy: cfg.policy_for_round(state.round),
                    },
                ),
            })
        }
        Phase::JudgeStage => {
            let answers = state
                .turns
                .iter()
                .map(|t| JudgeEvidence {
                    role: t.role,
                    round: t.round,
                    message_kind: t.message_kind,
                    response_text: t.response_text.clone(),
                })
                .collect();
            Ok(ProtocolAction::InvokeJudge {
                payload: payload(
                    "judge",
                    MessageKind::JudgeAsk,
                    state.round,
                    ActionContext::Judge { answers },
                ),
            })
        }
        Phase::Done => Err(ProtocolError::Finished),
    }
}

fn describe(role: Role, kind: MessageKind, round: u32) -> String {
    format!("{role}/{kind}/round {round}")
}

fn check_turn(action: &ProtocolAction, turn: &Turn, state: &DebateState) -> Result<(), ProtocolError> {
    let got = describe(turn.role, turn.message_kind, turn.round);
    let mismatch = |expected: String| ProtocolError::UnexpectedTurn {
        expected,
        got: got.clone(),
    };
    match action {
        ProtocolAction::AskBoth { payload } => {
            let ok_role = turn.role.is_debater() && state.stance_of(turn.role).is_none();
            if !ok_role || turn.message_kind != payload.message_kind || turn.round != payload.round {
                return Err(mismatch(format!(
                    "debater_a or debater_b/{}/round {}",
                    payload.message_kind, payload.round
                )));
            }
        }
        ProtocolAction::AskOne { target, payload }
        | ProtocolAction::Summarize { target, payload, .. } => {
            if turn.role != *target || turn.message_kind != payload.message_kind || turn.round != payload.round {
                return Err(mismatch(describe(*target, payload.message_kind, payload.round)));
            }
        }
        ProtocolAction::InvokeJudge { payload } => {
            if turn.role != Role::Judge || turn.message_kind != payload.message_kind || turn.round != payload.round {
                return Err(mismatch(describe(Role::Judge, payload.message_kind, payload.round)));
            }
        }
        ProtocolAction::Halt { verdict } => return Err(ProtocolError::Resolved(*verdict)),
    }
    if turn.message_kind.bears_stance() && turn.parsed_stance.is_none() {
        return Err(ProtocolError::MissingStance {
            role: turn.role,
            kind: turn.message_kind,
        });
    }
    Ok(())
}

fn set_stance(state: &mut DebateState, role: Role, stance: Option<Stance>) {
    match role {
        Role::DebaterA => state.stance_a = stance,
        Role::DebaterB => state.stance_b = stance,
        Role::Judge => {}
    }
}

fn compile_dossier(state: &mut DebateState, role: Role) {
    let battery_len = battery_for(state).len();
    let raw: Vec<(InquiryQuestion, String)> = state
        .turns
        .iter()
        .filter(|t| t.message_kind == MessageKind::InquiryQuestion && t.role == role)
        .zip(battery_for(state))
        .map(|(t, q)| (q, t.response_text.clone()))
        .collect();
    debug_assert_eq!(raw.len(), battery_len);
    let mut dossier = extract_fields(&raw);
    dossier.object_name = state.item.object_name.clone();
    state.dossiers.insert(role, dossier);
}

/// Append `turn` and advance the workflow. The input state is left untouched.
pub fn apply_turn(state: &DebateState, turn: Turn) -> Result<DebateState, ProtocolError> {
    let action = next_action(state)?;
    check_turn(&action, &turn, state)?;

    let mut next = state.clone();
    let role = turn.role;
    let stance = turn.parsed_stance.clone();
    let kind = turn.message_kind;
    next.turns.push(turn);

    match next.config.mode {
        Mode::Baseline => {
            let verdict = stance
                .as_ref()
                .and_then(|s| s.value.decided())
                .ok_or(ProtocolError::UndecidedFinalStance(role))?;
            set_stance(&mut next, role, stance);
            next.resolution = Some(Resolution {
                verdict,
                agreed_at_round: Some(0),
            });
        }
        Mode::Sro => match next.phase {
            Phase::Round0 => {
                set_stance(&mut next, role, stance);
                next.phase = Phase::Round1Inquiry;
                next.round = 1;
            }
            _ if kind == MessageKind::InquiryQuestion => {
                if inquiry_turns(&next).count() == battery_for(&next).len() {
                    compile_dossier(&mut next, role);
                }
            }
            _ => {
                let verdict = stance
                    .as_ref()
                    .and_then(|s| s.value.decided())
                    .ok_or(ProtocolError::UndecidedFinalStance(role))?;
                set_stance(&mut next, role, stance);
                next.resolution = Some(Resolution {
                    verdict,
                    agreed_at_round: Some(1),
                });
            }
        },
        Mode::Mad => apply_mad(&mut next, role, stance)?,
    }
    Ok(next)
}

fn apply_mad(next: &mut DebateState, role: Role, stance: Option<Stance>) -> Result<(), ProtocolError> {
    let max = next.config.max_debate_rounds;
    match next.phase {
        Phase::Round0 => {
            set_stance(next, role, stance);
            if let (Some(a), Some(b)) = (&next.stance_a, &next.stance_b) {
                let first = choose_first_debater(a.value, b.value);
                match agreement(next) {
                    Agreement::Agreed(verdict) => {
                        next.resolution = Some(Resolution {
                            verdict,
                            agreed_at_round: Some(0),
                        });
                    }
                    _ => {
                        next.first_debater = Some(first);
                        next.phase = Phase::Round1Inquiry;
                        next.round = 1;
                    }
                }
            }
        }
        Phase::Round1Inquiry => {
            if inquiry_turns(next).count() == battery_for(next).len() {
                compile_dossier(next, role);
                if max <= 1 {
                    next.phase = Phase::JudgeStage;
                } else {
                    next.phase = Phase::Round2Hint;
                    next.round = 2;
                }
            }
        }
        Phase::Round2Hint | Phase::Round3Feedback => {
            set_stance(next, role, stance);
            let round = next.round;
            if let Agreement::Agreed(verdict) = agreement(next) {
                next.resolution = Some(Resolution {
                    verdict,
                    agreed_at_round: Some(round),
                });
            } else if round >= max {
                next.phase = Phase::JudgeStage;
            } else {
                next.phase = Phase::Round3Feedback;
                next.round = round + 1;
            }
        }
        Phase::JudgeStage => {
            let verdict = stance
                .as_ref()
                .and_then(|s| s.value.decided())
                .ok_or(ProtocolError::JudgeUndecided)?;
            next.resolution = Some(Resolution {
                verdict,
                agreed_at_round: None,
            });
        }
        Phase::Done => return Err(ProtocolError::Finished),
    }
    Ok(())
}

fn flipped_roles(state: &DebateState) -> BTreeSet<Role> {
    [Role::DebaterA, Role::DebaterB]
        .into_iter()
        .filter(|&role| match (state.initial_stance(role), state.stance_of(role)) {
            (Some(initial), Some(last)) => initial.value != last.value,
            _ => false,
        })
        .collect()
}

fn recorded_judge_stance(state: &DebateState) -> Option<&Stance> {
    state
        .turns
        .iter()
        .rev()
        .find(|t| t.role == Role::Judge && t.message_kind == MessageKind::JudgeAsk)
        .and_then(|t| t.parsed_stance.as_ref())
}

/// Build the outcome of a resolved debate, or of a debate stuck at the judge
/// stage given the judge's stance.
pub fn finalize(state: &DebateState, judge_stance: Option<&Stance>) -> Result<DebateOutcome, ProtocolError> {
    if state.phase == Phase::Done {
        return state.outcome.clone().ok_or(ProtocolError::Finished);
    }
    let (verdict, agreed_at_round) = match state.resolution {
        Some(res) => (res.verdict, res.agreed_at_round),
        None => {
            if state.phase != Phase::JudgeStage {
                return Err(ProtocolError::NotFinalizable(
                    "debaters have neither agreed nor exhausted the debate rounds",
                ));
            }
            let judge = judge_stance
                .or_else(|| recorded_judge_stance(state))
                .ok_or(ProtocolError::NotFinalizable("judge stance required"))?;
            let verdict = judge.value.decided().ok_or(ProtocolError::JudgeUndecided)?;
            (verdict, None)
        }
    };
    if let Some(j) = judge_stance {
        if agreed_at_round.is_none() && j.value == StanceValue::Unsure {
            return Err(ProtocolError::JudgeUndecided);
        }
    }
    Ok(DebateOutcome {
        verdict,
        agreed_at_round,
        judge_used: agreed_at_round.is_none(),
        flipped_roles: flipped_roles(state),
        transcript: state.turns.clone(),
        cause: None,
    })
}

/// Mark the debate done with its outcome.
pub fn close(state: &DebateState, outcome: DebateOutcome) -> DebateState {
    let mut done = state.clone();
    done.phase = Phase::Done;
    done.outcome = Some(outcome);
    done
}

/// Rebuild the outcome of a persisted transcript by replaying every turn.
pub fn replay(item: ProbeItem, config: DebateConfig, turns: &[Turn]) -> Result<DebateOutcome, ProtocolError> {
    let mut state = new_debate(item, config)?;
    for turn in turns {
        state = apply_turn(&state, turn.clone())?;
    }
    finalize(&state, None)
}
