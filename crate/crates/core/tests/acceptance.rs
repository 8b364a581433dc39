//! Acceptance suite. Prints one line per criterion and exits nonzero when any
//! criterion fails. Criterion 10 talks to a real backend and only runs when
//! `MMD_LIVE_CONFIG` names a config file whose credential variables are set.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Deserialize;

use mmdebate::bench::{
    compute_metrics, creativity_ratio, error_budget_exceeded, f1_from, load_probes_with, run_suite, LoadOptions, MemorySink,
    ResultRecord, SuiteOptions,
};
use mmdebate::cli::{self, MetricsSummary, Overrides, RunConfig, RunOptions, Runtime};
use mmdebate::clock::FixedClock;
use mmdebate::gateway::{AgentRequest, AttemptError, Backend, BackendReply, BackendSpec, Gateway, GatewayError};
use mmdebate::inquiry::{region_of, AttributeKind, ObjectDossier, RegionTag, Relation};
use mmdebate::propagation::{filter_dossier, MessageField, PolicyTag};
use mmdebate::protocol::{
    replay, Answer, DatasetTag, DebateConfig, DebateOutcome, MessageKind, Mode, ProbeItem, ProtocolError, Role, Split,
    Stance, StanceValue,
};
use mmdebate::runner::{AgentAssignment, RunError};
use mmdebate::Engine;

type Verdict = Result<String, String>;

enum Status {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Criterion {
    number: u32,
    name: &'static str,
    limit: Option<Duration>,
    check: fn() -> Status,
}

fn pass_or_fail(v: Verdict) -> Status {
    match v {
        Ok(s) => Status::Pass(s),
        Err(s) => Status::Fail(s),
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1

struct Oracle {
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
    errors: usize,
}

/// Brute-force recount, one pass per cell.
fn recount(records: &[ResultRecord]) -> Oracle {
    let cell = |pred: Answer, gold: Answer| {
        records
            .iter()
            .filter(|r| r.error.is_none() && r.predicted == Some(pred) && r.gold == gold)
            .count()
    };
    Oracle {
        tp: cell(Answer::Yes, Answer::Yes),
        fp: cell(Answer::Yes, Answer::No),
        tn: cell(Answer::No, Answer::No),
        fn_: cell(Answer::No, Answer::Yes),
        errors: records.iter().filter(|r| r.error.is_some()).count(),
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 * 100.0 / den as f64)
    }
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => x == y || (x - y).abs() <= 1e-9 * x.abs().max(y.abs()),
        _ => false,
    }
}

fn random_records(rng: &mut StdRng, n: usize) -> Vec<ResultRecord> {
    let yes_bias: f64 = rng.gen();
    let err_rate: f64 = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..0.2) };
    (0..n)
        .map(|i| {
            let gold = if rng.gen_bool(0.5) { Answer::Yes } else { Answer::No };
            let failed = rng.gen_bool(err_rate);
            let predicted = (!failed).then(|| if rng.gen_bool(yes_bias) { Answer::Yes } else { Answer::No });
            ResultRecord {
                item_id: format!("r{i}"),
                predicted,
                gold,
                outcome_ref: String::new(),
                mode: Mode::Mad,
                error: failed.then(|| "timeout".to_string()),
                dataset: DatasetTag::Pope,
                split: Split::Random,
            }
        })
        .collect()
}

fn metric_oracle() -> Verdict {
    let mut rng = StdRng::seed_from_u64(0x5eed_0001);
    let mut total = 0;
    for case in 0..200 {
        let n = if case == 0 { 1 } else if case == 1 { 1000 } else { rng.gen_range(1..=1000) };
        total += n;
        let records = random_records(&mut rng, n);
        let m = compute_metrics(&records);
        let o = recount(&records);
        let c = m.counts;
        ensure(
            (c.tp, c.fp, c.tn, c.fn_, c.errors, c.total) == (o.tp, o.fp, o.tn, o.fn_, o.errors, n),
            || format!("case {case}: counts differ"),
        )?;
        let answered = n - o.errors;
        let precision = ratio(o.tp, o.tp + o.fp);
        let recall = ratio(o.tp, o.tp + o.fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        let expected = [ratio(o.tp + o.tn, answered), precision, recall, f1, ratio(o.tp + o.fp, answered)];
        for (k, (got, want)) in m.values().into_iter().zip(expected).enumerate() {
            ensure(close(got, want), || format!("case {case}: metric {k} is {got:?}, oracle {want:?}"))?;
        }
    }
    // under an exactly balanced gold set, yes-ratio follows from recall and precision
    for case in 0..50 {
        let half = rng.gen_range(1..=500);
        let mut records = random_records(&mut rng, 2 * half);
        for (i, r) in records.iter_mut().enumerate() {
            r.gold = if i < half { Answer::Yes } else { Answer::No };
            r.error = None;
            r.predicted.get_or_insert(Answer::No);
        }
        let m = compute_metrics(&records);
        if let (Some(p), Some(r), Some(y)) = (m.precision, m.recall, m.yes_ratio) {
            if p > 0.0 {
                let derived = r / (2.0 * p) * 100.0;
                ensure((y - derived).abs() <= 1e-9 * y.max(1.0), || {
                    format!("balanced case {case}: yes-ratio {y} vs recall/(2 precision) {derived}")
                })?;
            }
        }
    }
    Ok(format!("200 result sets, {total} records"))
}

// ---------------------------------------------------------------- 2

#[derive(Deserialize)]
struct TableRow {
    model: String,
    setting: String,
    method: String,
    precision: f64,
    recall: f64,
    f1: f64,
    yes_ratio: f64,
}

#[derive(Deserialize)]
struct Table {
    rows: Vec<TableRow>,
}

fn table_consistency() -> Verdict {
    let text = fs::read_to_string(common::fixtures().join("pope_published_table.json")).map_err(|e| e.to_string())?;
    let table: Table = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    ensure(table.rows.len() == 18, || format!("expected 18 rows, found {}", table.rows.len()))?;
    let mut bad = Vec::new();
    for row in &table.rows {
        let f1 = f1_from(row.precision, row.recall).unwrap_or(0.0);
        let yes = row.recall / (2.0 * row.precision) * 100.0;
        let label = format!("{} {} {}", row.model, row.setting, row.method);
        // two-decimal comparison of the rounded values, as printed
        let f1_round = (f1 * 100.0).round() / 100.0;
        if (f1_round - row.f1).abs() > 0.01 + 1e-9 {
            bad.push(format!("{label}: F1 from P/R {f1:.2}, printed {:.2}", row.f1));
        }
        if (yes - row.yes_ratio).abs() > 0.02 + 1e-9 {
            bad.push(format!("{label}: yes-ratio from P/R {yes:.2}, printed {:.2}", row.yes_ratio));
        }
    }
    if bad.is_empty() {
        Ok("18 rows consistent".into())
    } else {
        Err(format!("{} of 36 checks off: {}", bad.len(), bad.join("; ")))
    }
}

// ---------------------------------------------------------------- 3

fn outcome_bytes(sink: &MemorySink, items: &[ProbeItem]) -> BTreeMap<String, Vec<u8>> {
    items
        .iter()
        .filter_map(|i| sink.outcome(&i.id).map(|o| (i.id.clone(), serde_json::to_vec(&o).unwrap())))
        .collect()
}

fn replay_determinism() -> Verdict {
    let items = common::probes();
    ensure(items.len() == 25, || format!("{} fixture items", items.len()))?;
    for fig in ["fig3-clock", "fig7-vase", "fig8-cell-phone", "fig9-tv", "fig11-handbag"] {
        ensure(items.iter().any(|i| i.id == fig), || format!("missing {fig}"))?;
    }
    let config = common::config(Mode::Mad);
    let straight = |parallel| {
        let sink = MemorySink::new();
        let records = run_suite(
            &common::scripted_engine(),
            &items,
            &config,
            &SuiteOptions { parallel, ..SuiteOptions::default() },
            &sink,
        );
        (records, outcome_bytes(&sink, &items))
    };
    let (rec_a, out_a) = straight(4);
    let (rec_b, out_b) = straight(1);
    ensure(out_a.len() == 25, || format!("only {} debates finished", out_a.len()))?;
    ensure(rec_a == rec_b && out_a == out_b, || "two straight runs differ".into())?;

    let first_sink = MemorySink::new();
    let first = run_suite(
        &common::scripted_engine(),
        &items,
        &config,
        &SuiteOptions { parallel: 3, limit: Some(11), ..SuiteOptions::default() },
        &first_sink,
    );
    let completed = first.into_iter().map(|r| (r.item_id.clone(), r)).collect();
    let second_sink = MemorySink::new();
    let resumed = run_suite(
        &common::scripted_engine(),
        &items,
        &config,
        &SuiteOptions { parallel: 4, completed, limit: None },
        &second_sink,
    );
    let mut out_r = outcome_bytes(&first_sink, &items);
    out_r.extend(outcome_bytes(&second_sink, &items));
    ensure(resumed == rec_a, || "resumed records differ".into())?;
    ensure(out_r == out_a, || "resumed outcomes differ".into())?;

    // replaying each persisted transcript rebuilds the same outcome
    for item in &items {
        let outcome: DebateOutcome = serde_json::from_slice(&out_a[&item.id]).unwrap();
        let again = replay(item.clone(), config.clone(), &outcome.transcript).map_err(|e| format!("{}: {e}", item.id))?;
        ensure(serde_json::to_vec(&again).unwrap() == out_a[&item.id], || format!("{}: replay differs", item.id))?;
    }

    // the same through the command line, interrupted after 8 items
    let tmp = tempfile::TempDir::new().unwrap();
    let rt = Runtime { env: &|_| None, clock: Arc::new(FixedClock::default()) };
    let opts = |out: PathBuf, max_items| RunOptions {
        config: Some(common::debates_dir().join("config.json")),
        overrides: Overrides { out: Some(out), ..Overrides::default() },
        max_items,
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    cli::run(&opts(a.clone(), None), &rt, &mut Vec::new()).map_err(|e| e.to_string())?;
    cli::run(&opts(b.clone(), Some(8)), &rt, &mut Vec::new()).map_err(|e| e.to_string())?;
    cli::resume(&b, None, &rt, &mut Vec::new()).map_err(|e| e.to_string())?;
    let mut files = vec!["results.jsonl".to_string(), "metrics.json".to_string()];
    files.extend(items.iter().map(|i| format!("transcripts/{}.jsonl", i.id)));
    for f in &files {
        ensure(fs::read(a.join(f)).ok() == fs::read(b.join(f)).ok(), || format!("{f} differs after resume"))?;
    }
    Ok("25 debates identical across runs, resume and replay".into())
}

// ---------------------------------------------------------------- 4

type Checkpoint = (Role, u32, MessageKind);

#[derive(Default)]
struct PlanState {
    plan: Vec<StanceValue>,
    assigned: BTreeMap<Checkpoint, StanceValue>,
    order: Vec<Checkpoint>,
    requests: Vec<AgentRequest>,
}

/// Answers each stance checkpoint with the next planned value; a re-ask of
/// the same checkpoint gets the same value. Runs out with a marker error so
/// the caller can branch.
#[derive(Default)]
struct PlanBackend {
    state: Mutex<PlanState>,
}

const BRANCH: &str = "plan exhausted";

fn word(v: StanceValue) -> &'static str {
    match v {
        StanceValue::Yes => "Yes, I can see it.",
        StanceValue::No => "No, there is none.",
        StanceValue::Unsure => "I cannot tell from this picture.",
    }
}

impl Backend for PlanBackend {
    fn call(&self, request: &AgentRequest) -> Result<BackendReply, AttemptError> {
        let mut st = self.state.lock().unwrap();
        st.requests.push(request.clone());
        let kind = request.context.message_kind.unwrap();
        let text = match kind {
            MessageKind::AnswerFreeText => "A kitchen counter with a kettle.".to_string(),
            MessageKind::InquiryQuestion => "It is red and round, near the top-left, next to a cup.".to_string(),
            _ => {
                let key = (request.role, request.context.round, kind);
                let value = match st.assigned.get(&key) {
                    Some(v) => *v,
                    None => {
                        let i = st.order.len();
                        let Some(v) = st.plan.get(i).copied() else {
                            return Err(AttemptError::Fatal(GatewayError::Script(BRANCH.into())));
                        };
                        st.assigned.insert(key, v);
                        st.order.push(key);
                        v
                    }
                };
                word(value).to_string()
            }
        };
        Ok(BackendReply { text, ..Default::default() })
    }
}

struct Leaf {
    result: Result<DebateOutcome, RunError>,
    assigned: BTreeMap<Checkpoint, StanceValue>,
    requests: Vec<AgentRequest>,
}

fn run_plan(engine: &Engine, backend: &PlanBackend, item: &ProbeItem, config: &DebateConfig, plan: &[StanceValue]) -> Option<Leaf> {
    *backend.state.lock().unwrap() = PlanState { plan: plan.to_vec(), ..PlanState::default() };
    let result = engine.run_debate(item, config, &mut |_| Ok(()));
    if let Err(RunError::Gateway { source: GatewayError::Script(m), .. }) = &result {
        if m == BRANCH {
            return None;
        }
    }
    let st = std::mem::take(&mut *backend.state.lock().unwrap());
    Some(Leaf { result, assigned: st.assigned, requests: st.requests })
}

/// Every complete stance schedule for `config`, by depth-first extension.
fn enumerate(engine: &Engine, backend: &PlanBackend, item: &ProbeItem, config: &DebateConfig) -> Vec<(Vec<StanceValue>, Leaf)> {
    let mut leaves = Vec::new();
    let mut stack = vec![Vec::new()];
    while let Some(plan) = stack.pop() {
        match run_plan(engine, backend, item, config, &plan) {
            Some(leaf) => leaves.push((plan, leaf)),
            None => {
                for v in [StanceValue::Unsure, StanceValue::No, StanceValue::Yes] {
                    let mut p = plan.clone();
                    p.push(v);
                    stack.push(p);
                }
            }
        }
    }
    leaves
}

fn decided_pair(a: Option<StanceValue>, b: Option<StanceValue>) -> Option<Answer> {
    match (a, b) {
        (Some(StanceValue::Yes), Some(StanceValue::Yes)) => Some(Answer::Yes),
        (Some(StanceValue::No), Some(StanceValue::No)) => Some(Answer::No),
        _ => None,
    }
}

fn check_leaf(max: u32, plan: &[StanceValue], leaf: &Leaf) -> Result<(), String> {
    let ctx = || format!("max {max}, plan {plan:?}");
    // independent model of the debate from the assigned stances
    let debater_turns: Vec<(Checkpoint, StanceValue)> = leaf
        .assigned
        .iter()
        .filter(|((r, _, _), _)| r.is_debater())
        .map(|(k, v)| (*k, *v))
        .collect();
    let judge = leaf.assigned.iter().find(|((r, _, _), _)| *r == Role::Judge).map(|(_, v)| *v);
    let mut ordered = debater_turns.clone();
    ordered.sort_by_key(|((r, round, _), _)| (*round, *r != Role::DebaterA));
    let (mut a, mut b) = (None, None);
    let mut agreed: Option<(Answer, u32)> = None;
    for (i, ((role, round, _), v)) in ordered.iter().enumerate() {
        ensure(agreed.is_none(), || format!("{}: debater spoke after agreement at turn {i}", ctx()))?;
        if *role == Role::DebaterA {
            a = Some(*v);
        } else {
            b = Some(*v);
        }
        if let Some(ans) = decided_pair(a, b) {
            agreed = Some((ans, *round));
        }
    }
    // rounds any debater was addressed in, stance-bearing or not
    let rounds: BTreeSet<u32> = leaf.requests.iter().filter(|r| r.role.is_debater()).map(|r| r.context.round).collect();
    ensure(rounds.iter().all(|r| *r <= max), || format!("{}: rounds {rounds:?}", ctx()))?;
    match (&leaf.result, agreed) {
        (Ok(out), Some((ans, round))) => {
            ensure(!out.judge_used && judge.is_none(), || format!("{}: judge used after agreement", ctx()))?;
            ensure(out.verdict == ans && out.agreed_at_round == Some(round), || format!("{}: {out:?}", ctx()))?;
            if round == 0 {
                // short-circuit: nothing after the two independent answers
                ensure(out.transcript.len() == 2, || format!("{}: round-0 agreement ran on", ctx()))?;
            }
        }
        (Ok(out), None) => {
            ensure(out.judge_used, || format!("{}: disagreement without judge", ctx()))?;
            let want = judge.and_then(|j| j.decided());
            ensure(want == Some(out.verdict), || format!("{}: verdict {:?} judge {judge:?}", ctx(), out.verdict))?;
            ensure(rounds.contains(&max), || format!("{}: judge before round {max}, assigned {:?}", ctx(), leaf.assigned))?;
        }
        (Err(RunError::Protocol(ProtocolError::JudgeUndecided)), None) => {
            ensure(judge == Some(StanceValue::Unsure), || format!("{}: judge undecided without Unsure", ctx()))?;
        }
        (Err(e), _) => return Err(format!("{}: unexpected error {e}", ctx())),
    }
    Ok(())
}

fn workflow_conformance() -> Verdict {
    let backend = Arc::new(PlanBackend::default());
    let gateway = Gateway::new();
    gateway.register_custom(BackendSpec::scripted("plan", "-"), backend.clone()).unwrap();
    let engine = Engine::new(Arc::new(gateway), AgentAssignment::all("plan")).with_clock(Arc::new(FixedClock::default()));
    let item = common::probe("fig3-clock");
    let mut leaves_total = 0;
    for max in 1..=4 {
        let mut config = common::config(Mode::Mad);
        config.max_debate_rounds = max;
        let leaves = enumerate(&engine, &backend, &item, &config);
        leaves_total += leaves.len();
        let mut round0: BTreeMap<Role, BTreeSet<String>> = BTreeMap::new();
        let mut first_pairs = BTreeSet::new();
        for (plan, leaf) in &leaves {
            check_leaf(max, plan, leaf)?;
            for r in leaf.requests.iter().filter(|r| r.context.round == 0 && r.context.message_kind == Some(MessageKind::IndependentAsk) && r.messages.len() == 1) {
                round0.entry(r.role).or_default().insert(serde_json::to_string(r).unwrap());
            }
            first_pairs.insert((plan[0], plan[1]));
        }
        // every opponent answer was tried and no round-0 request changed
        ensure(first_pairs.len() == 9, || format!("max {max}: {} round-0 pairs", first_pairs.len()))?;
        for role in [Role::DebaterA, Role::DebaterB] {
            let n = round0.get(&role).map_or(0, BTreeSet::len);
            ensure(n == 1, || format!("max {max}: {n} distinct round-0 prompts for {role}"))?;
        }
    }
    Ok(format!("{leaves_total} stance schedules over max rounds 1..4"))
}

// ---------------------------------------------------------------- 5

fn random_dossier(rng: &mut StdRng) -> (ObjectDossier, Vec<String>) {
    const ATTRS: [&str; 8] = ["black", "round", "small", "silver", "oval", "tiny", "striped", "a flat disc"];
    const OTHERS: [&str; 6] = ["handlebar", "laptop keyboard", "wooden shelf", "person's hand", "bus stop", "window sill"];
    let mut d = ObjectDossier::empty("clock");
    for kind in [AttributeKind::Color, AttributeKind::Shape, AttributeKind::Size] {
        if rng.gen_bool(0.7) {
            d.attributes.insert(kind, ATTRS[rng.gen_range(0..ATTRS.len())].to_string());
        }
    }
    if rng.gen_bool(0.7) {
        d.region = Some(RegionTag::ALL[rng.gen_range(0..5)]);
    }
    let n = rng.gen_range(0..4);
    let others: Vec<String> = (0..n).map(|_| OTHERS[rng.gen_range(0..OTHERS.len())].to_string()).collect();
    d.relations = others
        .iter()
        .map(|o| Relation { predicate: "next to".into(), other_object: o.clone() })
        .collect();
    (d, others)
}

fn propagation_ablation() -> Verdict {
    let item = common::probe("fig9-tv");
    let b_round2 = |policy| -> Result<StanceValue, String> {
        let mut config = common::config(Mode::Mad);
        config.propagation_policy_round2 = policy;
        let out = common::scripted_engine().run_debate(&item, &config, &mut |_| Ok(())).map_err(|e| e.to_string())?;
        let b0 = out.transcript.iter().find(|t| t.role == Role::DebaterB && t.round == 0);
        ensure(b0.and_then(|t| t.parsed_stance.as_ref()).map(|s| s.value) == Some(StanceValue::No), || "B does not start at No".into())?;
        out.transcript
            .iter()
            .find(|t| t.role == Role::DebaterB && t.round == 2)
            .and_then(|t| t.parsed_stance.as_ref())
            .map(|s| s.value)
            .ok_or_else(|| "no round-2 answer from B".to_string())
    };
    let partial = b_round2(PolicyTag::Partial)?;
    let full = b_round2(PolicyTag::Full)?;
    ensure(partial == StanceValue::No, || format!("partial: B answered {partial:?}"))?;
    ensure(full == StanceValue::Yes, || format!("full: B answered {full:?}"))?;

    let mut rng = StdRng::seed_from_u64(0x5eed_0005);
    let stance = Stance::new(StanceValue::Yes, "Yes, it is on the wall.");
    for case in 0..1000 {
        let (d, others) = random_dossier(&mut rng);
        let p = filter_dossier(Role::DebaterA, &d, &stance, PolicyTag::Partial);
        let f = filter_dossier(Role::DebaterA, &d, &stance, PolicyTag::Full);
        ensure(p.included_fields.is_subset(&f.included_fields), || format!("case {case}: partial fields not within full"))?;
        ensure(!p.included_fields.contains(&MessageField::Region) && !p.included_fields.contains(&MessageField::Relations), || {
            format!("case {case}: partial includes location fields")
        })?;
        for r in RegionTag::ALL {
            ensure(!p.rendered_text.contains(r.as_str()), || format!("case {case}: partial mentions {}", r.as_str()))?;
        }
        for o in &others {
            ensure(!p.rendered_text.contains(o.as_str()), || format!("case {case}: partial mentions {o}"))?;
        }
    }
    Ok("partial keeps B at No, full flips B to Yes; 1000 dossiers".into())
}

// ---------------------------------------------------------------- 6

fn region_partition() -> Verdict {
    // membership written independently of region_of: distance from the
    // middle for the centre box, then the sign of each offset
    let is = |tag: RegionTag, x: f64, y: f64| {
        let (dx, dy) = (x - 0.5, y - 0.5);
        let central = dx.abs().max(dy.abs()) <= 1.0 / 6.0;
        match tag {
            RegionTag::Center => central,
            RegionTag::TopLeft => !central && dx <= 0.0 && dy <= 0.0,
            RegionTag::TopRight => !central && dx > 0.0 && dy <= 0.0,
            RegionTag::BottomLeft => !central && dx <= 0.0 && dy > 0.0,
            RegionTag::BottomRight => !central && dx > 0.0 && dy > 0.0,
        }
    };
    let mut counts: BTreeMap<RegionTag, usize> = BTreeMap::new();
    for i in 0..100 {
        for j in 0..100 {
            let (x, y) = (i as f64 / 99.0, j as f64 / 99.0);
            let tag = region_of(x, y).map_err(|e| format!("gap at ({x}, {y}): {e}"))?;
            let holders: Vec<RegionTag> = RegionTag::ALL.into_iter().filter(|t| is(*t, x, y)).collect();
            ensure(holders == vec![tag], || format!("({x}, {y}): region_of {tag:?}, membership {holders:?}"))?;
            *counts.entry(tag).or_default() += 1;
        }
    }
    ensure(counts.values().sum::<usize>() == 10_000, || "points lost".into())?;
    ensure(counts.len() == 5, || format!("empty preimage: {counts:?}"))?;
    ensure(region_of(-0.01, 0.5).is_err() && region_of(0.5, 1.01).is_err(), || "out-of-range accepted".into())?;
    Ok(format!("10000 points, {counts:?}"))
}

// ---------------------------------------------------------------- 7

fn sro_distinctness() -> Verdict {
    let items = common::probes();
    let sink = MemorySink::new();
    let records = run_suite(&common::scripted_engine(), &items, &common::config(Mode::Sro), &SuiteOptions::default(), &sink);
    ensure(records.iter().all(|r| r.error.is_none()), || "an SRO item failed".into())?;
    for item in &items {
        let turns = sink.transcript(&item.id);
        let roles: BTreeSet<Role> = turns.iter().map(|t| t.role).collect();
        ensure(roles == BTreeSet::from([Role::DebaterA]), || format!("{}: agents {roles:?}", item.id))?;
        let reevaluations = turns.iter().filter(|t| t.round > 0 && t.message_kind.bears_stance()).count();
        ensure(reevaluations >= 1, || format!("{}: no self re-evaluation", item.id))?;
    }
    Ok("25 transcripts with one agent and a re-evaluation".into())
}

// ---------------------------------------------------------------- 8

fn creativity_scoring() -> Verdict {
    let set = |yes: usize| -> Vec<ResultRecord> {
        (0..13)
            .map(|i| ResultRecord {
                item_id: format!("c{i}"),
                predicted: Some(if i < yes { Answer::Yes } else { Answer::No }),
                gold: Answer::Yes,
                outcome_ref: String::new(),
                mode: Mode::Mad,
                error: None,
                dataset: DatasetTag::PopeC,
                split: Split::Random,
            })
            .collect()
    };
    let r = |yes| creativity_ratio(&set(yes)).map_err(|e| e.to_string()).map(|c| c.ratio);
    let nine = r(9)?.ok_or("no ratio")?;
    ensure((nine - 69.23).abs() <= 0.01, || format!("9 of 13 gives {nine}"))?;
    ensure(r(0)? == Some(0.0) && r(13)? == Some(100.0), || "extremes".into())?;
    Ok(format!("9/13 = {nine:.2}"))
}

// ---------------------------------------------------------------- 9

fn credential_hygiene() -> Verdict {
    let tmp = tempfile::TempDir::new().unwrap();
    let (out, server) = common::sentinel_run(tmp.path());
    let used = server.received().len();
    ensure(used > 0, || "the HTTP backend was never called".into())?;
    let files = common::files_under(&out);
    let leaks = common::files_containing(&out, common::SENTINEL_KEY);
    ensure(leaks.is_empty(), || format!("key found in {leaks:?}"))?;
    Ok(format!("{} files scanned, {used} authenticated requests", files.len()))
}

// ---------------------------------------------------------------- 10

fn live_smoke() -> Status {
    let Some(path) = std::env::var_os("MMD_LIVE_CONFIG") else {
        return Status::Skip("MMD_LIVE_CONFIG not set".into());
    };
    let result = (|| -> Verdict {
        let config = RunConfig::load(&PathBuf::from(&path)).map_err(|e| e.to_string())?;
        let rt = Runtime::process();
        let missing = config.missing_credentials(rt.env);
        if !missing.is_empty() {
            return Ok(format!("SKIP:credentials not set ({})", missing.join(", ")));
        }
        config.validate().map_err(|e| e.to_string())?;
        let engine = cli::build_engine(&config, &rt).map_err(|e| e.to_string())?;
        let dataset = config.dataset.path.clone().ok_or("config has no dataset")?;
        let opts = LoadOptions { image_root: config.dataset.image_root.clone(), default_tag: None };
        let items: Vec<ProbeItem> = load_probes_with(&dataset, config.dataset.split, &opts)
            .map_err(|e| e.to_string())?
            .items
            .into_iter()
            .take(10)
            .collect();
        ensure(items.len() == 10, || format!("dataset has {} items", items.len()))?;
        let mut debate = config.debate.clone();
        debate.persona_set = config.persona_set().to_string();
        let records = run_suite(&engine, &items, &debate, &SuiteOptions::default(), &MemorySink::new());
        let summary = MetricsSummary::compute(debate.mode, &records);
        ensure(!error_budget_exceeded(&summary.overall.counts), || format!("{} of 10 items failed", summary.overall.counts.errors))?;
        let text = summary.to_text();
        ensure(text.lines().next().is_some_and(|h| h.contains("F1 Score") && h.contains("Yes-ratio")), || text.clone())?;
        Ok(text.lines().nth(1).unwrap_or("").trim().to_string())
    })();
    match result {
        Ok(s) if s.starts_with("SKIP:") => Status::Skip(s[5..].to_string()),
        other => pass_or_fail(other),
    }
}

fn main() {
    let criteria = [
        Criterion { number: 1, name: "metric oracle", limit: Some(Duration::from_secs(10)), check: || pass_or_fail(metric_oracle()) },
        Criterion { number: 2, name: "published table consistency", limit: Some(Duration::from_secs(1)), check: || pass_or_fail(table_consistency()) },
        Criterion { number: 3, name: "replay determinism", limit: None, check: || pass_or_fail(replay_determinism()) },
        Criterion { number: 4, name: "workflow conformance", limit: Some(Duration::from_secs(5)), check: || pass_or_fail(workflow_conformance()) },
        Criterion { number: 5, name: "propagation ablation", limit: None, check: || pass_or_fail(propagation_ablation()) },
        Criterion { number: 6, name: "region partition", limit: None, check: || pass_or_fail(region_partition()) },
        Criterion { number: 7, name: "single-agent self-reflection", limit: None, check: || pass_or_fail(sro_distinctness()) },
        Criterion { number: 8, name: "creativity scoring", limit: None, check: || pass_or_fail(creativity_scoring()) },
        Criterion { number: 9, name: "credential hygiene", limit: None, check: || pass_or_fail(credential_hygiene()) },
        Criterion { number: 10, name: "live smoke test", limit: None, check: live_smoke },
    ];
    let only: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in criteria.iter().filter(|c| only.map_or(true, |n| n == c.number)) {
        let started = Instant::now();
        let status = panic::catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Status::Fail(format!("panicked: {msg}"))
        });
        let elapsed = started.elapsed();
        let status = match (status, c.limit) {
            (Status::Pass(_), Some(limit)) if elapsed > limit => Status::Fail(format!("took {elapsed:.2?}, limit {limit:?}")),
            (s, _) => s,
        };
        let (tag, detail) = match &status {
            Status::Pass(d) => ("PASS", d),
            Status::Fail(d) => ("FAIL", d),
            Status::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {:>2} {:<30} {:>9.3}s  {detail}", c.number, c.name, elapsed.as_secs_f64());
        if matches!(status, Status::Fail(_)) {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
